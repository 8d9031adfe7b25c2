#pragma once

// The rater capability index: normalizing constants Delta, the kappa(theta)
// curve, the population-averaged kappa-bar per model family, delta-method
// variances, and numerical verification of the supremum claims behind each
// family's normalization.
//
// Delta is always computed by quadrature at runtime; the printed analytic
// approximation for the logistic families is exposed alongside for
// comparison. The GMF closed form for kappa-bar keeps its own internal
// normalization (it is exact at the supremum), with the quadrature path
// available as the cross-checking oracle.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ratercap/common.hpp"
#include "ratercap/linalg.hpp"
#include "ratercap/model.hpp"
#include "ratercap/quadrature.hpp"
#include "ratercap/rng.hpp"

namespace ratercap {

// Default rule for the Delta and kappa-bar integrals. The logistic density
// has poles at distance pi/sigma from the real axis, which slows plain
// Gauss-Hermite convergence for sigma beyond ~2; order 201 keeps the
// truncation error below 1e-12 across the sigma range that shows up here.
inline const QuadratureRule& capability_rule() { return gauss_hermite(201); }

enum class DeltaMethod { analytic, quadrature };
enum class KappaMethod { closed_form, quadrature };

struct DeltaConstant {
    Family family = Family::gmf;
    double sigma = 1.0;  // ability scale (logistic families)
    double value = 0.0;
    DeltaMethod computed_by = DeltaMethod::quadrature;
};

// --------------------------------------------------------------------------
// Delta constants
// --------------------------------------------------------------------------

// T(z): population-averaged logistic sensitivity at severity offset z and
// unit scale (the Appendix-A integrand family).
inline double logistic_sensitivity_avg(double z, const QuadratureRule& rule = capability_rule()) {
    LinkFunction logit{LinkKind::logit};
    return integrate_against_normal([&](double u) { return logit.pdf(u - z); }, 1.0, rule);
}

// T(z, rho; sigma): averaged GMF sensitivity sigma*rho*E[f(rho sigma theta - z)].
inline double gmf_sensitivity_avg(double z, double rho, double sigma,
                                  const QuadratureRule& rule = capability_rule()) {
    LinkFunction logit{LinkKind::logit};
    return sigma * rho *
           integrate_against_normal([&](double t) { return logit.pdf(rho * sigma * t - z); }, 1.0,
                                    rule);
}

// Quadrature Delta for the GMF at scale sigma: the supremum over raters of
// E[d mu / d theta], reached at rho = 1, eta = 0.
inline DeltaConstant delta_gmf(double sigma, const QuadratureRule& rule = capability_rule()) {
    if (!(sigma > 0.0)) throw invalid_input_error("delta_gmf: sigma must be positive");
    DeltaConstant d;
    d.family = Family::gmf;
    d.sigma = sigma;
    d.value = gmf_sensitivity_avg(0.0, 1.0, sigma, rule);
    d.computed_by = DeltaMethod::quadrature;
    return d;
}

// Printed closed-form approximation for the GMF Delta.
inline double delta_gmf_analytic(double sigma) {
    if (!(sigma > 0.0)) throw invalid_input_error("delta_gmf_analytic: sigma must be positive");
    return 0.25 * std::sqrt(2.0 * sigma * sigma / (2.0 + sigma * sigma));
}

// TFM Delta: the sigma = 1 logistic constant (~0.2066).
inline DeltaConstant delta_tfm(const QuadratureRule& rule = capability_rule()) {
    DeltaConstant d = delta_gmf(1.0, rule);
    d.family = Family::tfm;
    return d;
}

// Probit Delta: phi(0) = 1/sqrt(2*pi), reached as eta -> 0 and sigma_r -> 0.
inline double delta_probit() { return 1.0 / kSqrt2Pi; }

// HRM Delta: E[dF1/dtheta] with the Rasch level 2; independent of the rater
// parameters (delta_i = 0 convention, unit ability scale).
inline double delta_hrm(double alpha = 0.0, const QuadratureRule& rule = capability_rule()) {
    LinkFunction logit{LinkKind::logit};
    return integrate_against_normal([&](double t) { return logit.pdf(t + alpha); }, 1.0, rule);
}

// --------------------------------------------------------------------------
// Per-rater capability parameters
// --------------------------------------------------------------------------

// The slice of parameters the index depends on for one rater.
struct RaterIndexParams {
    double rho = 1.0;      // discrimination (logistic families; probit via conversion)
    double eta = 0.0;      // severity
    double sigma = 1.0;    // ability scale (logistic families)
    double sigma_r = 0.0;  // probit noise scale
    double hrm_c = 0.0;    // HRM criterion
    double hrm_a = 0.0;    // HRM slope
};

inline double probit_rho_from_sigma_r(double sigma_r) {
    if (sigma_r < 0.0) throw invalid_input_error("sigma_r must be nonnegative");
    return 1.0 / std::sqrt(1.0 + sigma_r * sigma_r);
}

inline double probit_sigma_r_from_rho(double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw invalid_input_error("probit rho must lie in (0,1]");
    return std::sqrt(1.0 / (rho * rho) - 1.0);
}

// --------------------------------------------------------------------------
// kappa(theta)
// --------------------------------------------------------------------------

// GMF/TFM pointwise capability at standardized ability theta, normalized by
// the quadrature Delta at the same sigma. The TFM uses rho = 1.
inline double kappa_gmf(double theta, double rho, double eta, double sigma, double delta_value) {
    LinkFunction logit{LinkKind::logit};
    return rho * sigma * logit.pdf(rho * sigma * theta - eta) / delta_value;
}

// Probit pointwise capability; the 1/sqrt(2*pi) normalizer is already folded
// into the closed form.
inline double kappa_probit(double theta, double eta, double sigma_r) {
    if (!(sigma_r > 0.0))
        throw invalid_input_error("kappa_probit: sigma_r must be positive for the curve");
    double s = theta / sigma_r - eta;
    return std::exp(-0.5 * s * s) / sigma_r;
}

// HRM capability: constant in theta, equal to F_{2,1} - F_{2,0}.
inline double kappa_hrm(double c, double a, const LinkFunction& link = LinkFunction{LinkKind::logit},
                        HrmSign sign = HrmSign::sdt_standard) {
    double s1 = (sign == HrmSign::as_printed) ? c - a : a - c;
    double s0 = (sign == HrmSign::as_printed) ? c : -c;
    return link.cdf(s1) - link.cdf(s0);
}

// --------------------------------------------------------------------------
// kappa-bar: closed forms and the quadrature oracle
// --------------------------------------------------------------------------

struct FixedPointResult {
    double x = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Solves x = rho^2 sigma^2 (1 - e^x)/(1 + e^x) + eta. The map's range brackets
// the root in [eta - rho^2 sigma^2, eta + rho^2 sigma^2]; Newton from eta with
// a bisection fallback.
inline FixedPointResult gmf_kappa_fixed_point(double rho, double eta, double sigma,
                                              double tol = 1e-10, int max_iter = 100) {
    FixedPointResult res;
    const double w2 = sqr(rho * sigma);
    auto g = [&](double x) {
        double ex = std::exp(clamp_predictor(x));
        return w2 * (1.0 - ex) / (1.0 + ex) + eta - x;
    };
    auto gprime = [&](double x) {
        double e = std::exp(-std::fabs(clamp_predictor(x)));
        double fe = e / sqr(1.0 + e);
        return -2.0 * w2 * fe - 1.0;
    };
    double x = eta;
    for (int it = 0; it < max_iter; ++it) {
        double gx = g(x);
        if (std::fabs(gx) <= tol) {
            res.x = x;
            res.converged = true;
            res.iterations = it;
            return res;
        }
        double step = gx / gprime(x);
        double xn = x - step;
        double lo = eta - w2, hi = eta + w2;
        if (!(xn >= lo && xn <= hi) || !std::isfinite(xn)) break;
        x = xn;
    }
    // Bisection on the bracket; g is strictly decreasing.
    double lo = eta - w2, hi = eta + w2;
    if (g(lo) < 0.0 || g(hi) > 0.0) {
        res.x = eta;
        res.converged = false;
        return res;
    }
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < tol) {
            res.x = 0.5 * (lo + hi);
            res.converged = true;
            res.iterations = it;
            return res;
        }
    }
    res.x = 0.5 * (lo + hi);
    res.converged = true;
    return res;
}

struct KappaBarResult {
    double value = 0.0;
    KappaMethod method = KappaMethod::closed_form;
    bool fixed_point_converged = true;
    double x_star = 0.0;
};

// Quadrature kappa-bar for the GMF/TFM: E[kappa(theta)] with the quadrature
// Delta at the same sigma.
inline double kappa_bar_gmf_quadrature(double rho, double eta, double sigma,
                                       const QuadratureRule& rule = capability_rule()) {
    double d = delta_gmf(sigma, rule).value;
    return gmf_sensitivity_avg(eta, rho, sigma, rule) / d;
}

// Printed GMF closed form built on the Laplace point x*. Exact (= 1) at the
// supremum rho = 1, eta = 0 for every sigma.
inline KappaBarResult kappa_bar_gmf_closed(double rho, double eta, double sigma) {
    if (!(sigma > 0.0)) throw invalid_input_error("kappa_bar: sigma must be positive");
    KappaBarResult out;
    if (rho == 0.0) {
        out.value = 0.0;
        out.x_star = eta;
        return out;
    }
    FixedPointResult fp = gmf_kappa_fixed_point(rho, eta, sigma);
    if (!fp.converged) {
        // Fall back to the quadrature oracle, flagged.
        out.value = kappa_bar_gmf_quadrature(rho, eta, sigma);
        out.method = KappaMethod::quadrature;
        out.fixed_point_converged = false;
        return out;
    }
    double xs = fp.x;
    double ex = std::exp(clamp_predictor(xs));
    // (x* - eta)/(rho sigma) rewritten through the fixed-point identity so the
    // rho -> 0 limit stays finite.
    double t = rho * sigma * (1.0 - ex) / (1.0 + ex);
    double w2 = sqr(rho * sigma);
    out.value = 4.0 * rho * std::sqrt(0.5 * (2.0 + sigma * sigma)) *
                std::exp(clamp_predictor(xs) - 0.5 * t * t) /
                ((1.0 + ex) * std::sqrt(sqr(1.0 + ex) + 2.0 * w2 * ex));
    out.x_star = xs;
    return out;
}

// Probit closed form: rho * exp(-(1 - rho^2) eta^2 / 2). The main-text
// exponent; confirmed against the quadrature oracle (the appendix variant
// with a square-root denominator is a misprint).
inline double kappa_bar_probit_closed(double rho, double eta) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw invalid_input_error("probit rho must lie in [0,1]");
    return rho * std::exp(-0.5 * (1.0 - rho * rho) * eta * eta);
}

// Quadrature oracle for the probit kappa-bar. Integrates in whichever
// variable keeps the Gaussian integrand at unit-or-wider scale: theta-space
// for sigma_r > 1, the substituted u = theta/sigma_r - eta for sigma_r <= 1
// (which stays smooth as sigma_r -> 0).
inline double kappa_bar_probit_quadrature(double rho, double eta,
                                          const QuadratureRule& rule = capability_rule()) {
    double sigma_r = probit_sigma_r_from_rho(rho);
    if (sigma_r == 0.0) return 1.0;
    if (sigma_r > 1.0)
        return integrate_against_normal([&](double t) { return kappa_probit(t, eta, sigma_r); },
                                        1.0, rule);
    return kSqrt2Pi * integrate_against_normal(
                          [&](double u) { return normal_pdf(sigma_r * (u + eta)); }, 1.0, rule);
}

// Family dispatcher over the per-rater parameter slice.
inline KappaBarResult kappa_bar(const ModelSpec& spec, const RaterIndexParams& rp,
                                KappaMethod method = KappaMethod::closed_form,
                                const QuadratureRule& rule = capability_rule()) {
    KappaBarResult out;
    switch (spec.family) {
        case Family::tfm:
        case Family::gmf: {
            double rho = (spec.family == Family::tfm) ? 1.0 : rp.rho;
            if (method == KappaMethod::closed_form) return kappa_bar_gmf_closed(rho, rp.eta, rp.sigma);
            out.value = kappa_bar_gmf_quadrature(rho, rp.eta, rp.sigma, rule);
            out.method = KappaMethod::quadrature;
            return out;
        }
        case Family::probit: {
            double rho = rp.sigma_r > 0.0 ? probit_rho_from_sigma_r(rp.sigma_r) : rp.rho;
            if (method == KappaMethod::closed_form) {
                out.value = kappa_bar_probit_closed(rho, rp.eta);
                return out;
            }
            out.value = kappa_bar_probit_quadrature(rho, rp.eta, rule);
            out.method = KappaMethod::quadrature;
            return out;
        }
        case Family::hrm:
            out.value = kappa_hrm(rp.hrm_c, rp.hrm_a, spec.link, spec.hrm_sign);
            return out;
    }
    return out;
}

// kappa(theta) samples over a grid. HRM curves are constant by Eq-level
// convention (kappa = kappa-bar = F21 - F20).
inline std::vector<std::pair<double, double>> kappa_curve(
    const ModelSpec& spec, const RaterIndexParams& rp, const std::vector<double>& theta_grid,
    const QuadratureRule& rule = capability_rule()) {
    std::vector<std::pair<double, double>> out;
    out.reserve(theta_grid.size());
    double delta_value = 0.0;
    if (spec.family == Family::tfm || spec.family == Family::gmf)
        delta_value = delta_gmf(rp.sigma, rule).value;
    for (double t : theta_grid) {
        double k;
        switch (spec.family) {
            case Family::tfm:
                k = kappa_gmf(t, 1.0, rp.eta, rp.sigma, delta_value);
                break;
            case Family::gmf:
                k = kappa_gmf(t, rp.rho, rp.eta, rp.sigma, delta_value);
                break;
            case Family::probit: {
                double sr = rp.sigma_r > 0.0 ? rp.sigma_r : probit_sigma_r_from_rho(rp.rho);
                k = kappa_probit(t, rp.eta, sr);
                break;
            }
            case Family::hrm:
            default:
                k = kappa_hrm(rp.hrm_c, rp.hrm_a, spec.link, spec.hrm_sign);
                break;
        }
        out.emplace_back(t, k);
    }
    return out;
}

inline std::vector<double> default_theta_grid(double lo = -5.0, double hi = 5.0, int points = 201) {
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    return g;
}

// --------------------------------------------------------------------------
// Delta-method variance
// --------------------------------------------------------------------------

// Gradient of the GMF kappa-bar closed form in (sigma, rho, eta) by central
// differences with step 1e-5 * max(1, |value|).
inline std::vector<double> kappa_bar_gradient(double rho, double eta, double sigma) {
    auto f = [](double r, double e, double s) { return kappa_bar_gmf_closed(r, e, s).value; };
    std::vector<double> g(3);
    auto step = [](double v) { return 1e-5 * std::max(1.0, std::fabs(v)); };
    double hs = step(sigma), hr = step(rho), he = step(eta);
    g[0] = (f(rho, eta, sigma + hs) - f(rho, eta, sigma - hs)) / (2.0 * hs);
    g[1] = (f(rho + hr, eta, sigma) - f(rho - hr, eta, sigma)) / (2.0 * hr);
    g[2] = (f(rho, eta + he, sigma) - f(rho, eta - he, sigma)) / (2.0 * he);
    return g;
}

// g' Cov g over zeta_r = (sigma, rho_r, eta_r). cov must be symmetric PSD.
inline double kappa_bar_variance(const ModelSpec& spec, const RaterIndexParams& rp,
                                 const Matrix& cov) {
    if (cov.rows != 3 || cov.cols != 3)
        throw invalid_input_error("kappa_bar_variance: covariance must be 3x3 over (sigma, rho, eta)");
    if (!is_psd(cov)) throw invalid_input_error("kappa_bar_variance: covariance not PSD");
    double rho = (spec.family == Family::tfm) ? 1.0 : rp.rho;
    std::vector<double> g = kappa_bar_gradient(rho, rp.eta, rp.sigma);
    double v = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) v += g[i] * cov(i, j) * g[j];
    return std::max(v, 0.0);
}

// --------------------------------------------------------------------------
// Capability report
// --------------------------------------------------------------------------

struct CapabilityReport {
    std::string rater_id;
    double kappa_bar = 0.0;
    double kappa_bar_variance = 0.0;
    bool has_variance = false;
    double delta_used = 0.0;
    std::vector<std::pair<double, double>> curve;
    KappaMethod method = KappaMethod::closed_form;
};

inline CapabilityReport capability_report(const ModelSpec& spec, const RaterIndexParams& rp,
                                          const std::string& rater_id,
                                          const std::vector<double>& theta_grid,
                                          const Matrix* cov = nullptr,
                                          KappaMethod method = KappaMethod::closed_form) {
    CapabilityReport rep;
    rep.rater_id = rater_id;
    KappaBarResult kb = kappa_bar(spec, rp, method);
    rep.kappa_bar = kb.value;
    rep.method = kb.method;
    switch (spec.family) {
        case Family::tfm:
        case Family::gmf:
            rep.delta_used = delta_gmf(rp.sigma).value;
            break;
        case Family::probit:
            rep.delta_used = delta_probit();
            break;
        case Family::hrm:
            rep.delta_used = delta_hrm();
            break;
    }
    rep.curve = kappa_curve(spec, rp, theta_grid);
    if (cov != nullptr) {
        rep.kappa_bar_variance = kappa_bar_variance(spec, rp, *cov);
        rep.has_variance = true;
    }
    return rep;
}

// --------------------------------------------------------------------------
// Appendix property verification
// --------------------------------------------------------------------------

struct AppendixCheck {
    std::string name;
    bool passed = false;
    double worst_margin = 0.0;  // smallest slack observed; negative means failure
    std::string detail;
};

struct AppendixReport {
    std::vector<AppendixCheck> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

// Grid-based confirmation of the supremum claims: (A) T(z) maximal at z = 0,
// (B) T(0, rho) increasing in rho, (C) probit Delta = phi(0) with the
// supremum at eta = 0 and the sigma_r -> 0 boundary, (D) HRM Delta
// independent of the rater parameters.
inline AppendixReport verify_appendix_properties(const QuadratureRule& rule = capability_rule()) {
    AppendixReport rep;

    {
        AppendixCheck a;
        a.name = "appendix_a_tfm_supremum_at_zero";
        double t0 = logistic_sensitivity_avg(0.0, rule);
        double worst = 1e300;
        for (double z = -3.0; z <= 3.0001; z += 0.1) {
            if (std::fabs(z) < 1e-12) continue;
            worst = std::min(worst, t0 - logistic_sensitivity_avg(z, rule));
        }
        a.worst_margin = worst;
        a.passed = worst > 0.0;
        a.detail = "T(0) = " + std::to_string(t0);
        rep.checks.push_back(a);
    }

    {
        AppendixCheck b;
        b.name = "appendix_b_gmf_increasing_in_rho";
        double worst = 1e300;
        for (double sigma : {0.5, 1.0, 2.0}) {
            double prev = gmf_sensitivity_avg(0.0, 0.1, sigma, rule);
            for (int k = 2; k <= 10; ++k) {
                double rho = 0.1 * k;
                double cur = gmf_sensitivity_avg(0.0, rho, sigma, rule);
                worst = std::min(worst, cur - prev);
                prev = cur;
            }
        }
        b.worst_margin = worst;
        b.passed = worst > 0.0;
        rep.checks.push_back(b);
    }

    {
        AppendixCheck c;
        c.name = "appendix_c_probit_delta";
        // sup over (eta, sigma_r) of E[phi(S)/sigma_r]; boundary sigma_r -> 0.
        // The variable choice mirrors kappa_bar_probit_quadrature.
        auto avg_sensitivity = [&](double eta, double sigma_r) {
            if (sigma_r > 1.0)
                return integrate_against_normal(
                    [&](double t) { return normal_pdf(t / sigma_r - eta) / sigma_r; }, 1.0, rule);
            return integrate_against_normal(
                [&](double u) { return normal_pdf(sigma_r * (u + eta)); }, 1.0, rule);
        };
        double target = delta_probit();
        double worst = 1e300;
        for (double sigma_r : {0.25, 0.5, 1.0, 2.0}) {
            for (double eta : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
                worst = std::min(worst, avg_sensitivity(0.0, sigma_r) - avg_sensitivity(eta, sigma_r));
            }
        }
        // boundary behavior: value at eta = 0 approaches phi(0) as sigma_r -> 0
        double boundary_gap = std::fabs(avg_sensitivity(0.0, 1e-3) - target);
        c.worst_margin = std::min(worst, 1e-6 - boundary_gap);
        c.passed = worst > 0.0 && boundary_gap < 1e-6;
        c.detail = "delta_probit = " + std::to_string(target);
        rep.checks.push_back(c);
    }

    {
        AppendixCheck d;
        d.name = "appendix_d_hrm_delta_rater_free";
        // E[d mu / d theta] / (F21 - F20) must not depend on (c, a).
        LinkFunction logit{LinkKind::logit};
        double ref = delta_hrm(0.0, rule);
        double worst = 0.0;
        for (double c : {-1.0, 0.0, 1.5}) {
            for (double a : {0.5, 2.0, 5.0}) {
                double f21 = logit.cdf(a - c), f20 = logit.cdf(-c);
                double avg = integrate_against_normal(
                    [&](double t) { return (f21 - f20) * logit.pdf(t); }, 1.0, rule);
                worst = std::max(worst, std::fabs(avg / (f21 - f20) - ref));
            }
        }
        d.worst_margin = 1e-9 - worst;
        d.passed = worst < 1e-9;
        rep.checks.push_back(d);
    }

    return rep;
}

}  // namespace ratercap
