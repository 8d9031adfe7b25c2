#pragma once

// Shared utilities: error types, numeric constants, a small parallel-for.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ratercap {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;
// Linear predictors are clamped to this range before exponentiation so that
// probabilities and log-probabilities stay finite for any finite parameters.
inline constexpr double kPredictorClamp = 35.0;

struct invalid_input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct identifiability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct degenerate_probability_error : std::domain_error {
    using std::domain_error::domain_error;
};

struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double clamp_predictor(double s) {
    if (s > kPredictorClamp) return kPredictorClamp;
    if (s < -kPredictorClamp) return -kPredictorClamp;
    return s;
}

inline double sqr(double x) { return x * x; }

// Standard normal pdf.
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

// Standard normal cdf via erfc; accurate over the clamped predictor range.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Inverse standard normal cdf. Acklam's rational approximation refined by one
// Halley step, good to ~1e-15 over (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw degenerate_probability_error("normal_quantile: p must be in (0,1)");
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement against the erfc-based cdf.
    double e = normal_cdf(x) - p;
    double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population standard deviation (divide by N).
inline double sd_pop(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double m = mean(v), s = 0.0;
    for (double x : v) s += sqr(x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// Runs fn(i) for i in [0, n). Falls back to a serial loop for small n.
// Callers must make fn(i) independent across i; results should be written to
// preallocated slots so reductions stay deterministic.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         std::size_t min_parallel = 64) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw <= 1 || n < min_parallel) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t n_threads = std::min<std::size_t>(hw, (n + min_parallel - 1) / min_parallel);
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        workers.emplace_back([&, t]() {
            for (std::size_t i = t; i < n; i += n_threads) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace ratercap
