#pragma once

// Exact-integration oracle: Gauss-Hermite rules against the standard normal
// weight and an adaptive Simpson fallback. This layer is the reference the
// Laplace approximation and the closed-form capability indices are tested
// against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "ratercap/common.hpp"
#include "ratercap/data.hpp"
#include "ratercap/model.hpp"

namespace ratercap {

enum class QuadKind { gauss_hermite, adaptive_simpson };

// Gauss-Hermite rule in probabilists' form: integral of g against phi(theta)
// is approximated by sum_k weights[k] * g(nodes[k]); weights sum to 1.
struct QuadratureRule {
    QuadKind kind = QuadKind::gauss_hermite;
    int order = 61;
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

// Symmetric tridiagonal QL with implicit shifts, accumulating only the first
// row of the eigenvector matrix (all the Golub-Welsch weights need).
inline void tridiagonal_ql_first_row(std::vector<double>& d, std::vector<double>& e,
                                     std::vector<double>& z) {
    const int n = static_cast<int>(d.size());
    e.push_back(0.0);
    const double eps = 2.3e-16;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m = l;
        do {
            for (m = l; m < n - 1; ++m) {
                double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (iter++ == 60)
                    throw convergence_error("gauss-hermite: tridiagonal QL did not converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::fabs(r) : -std::fabs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                int i = m - 1;
                for (; i >= l; --i) {
                    double f = s * e[i];
                    double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

// Probabilists' Gauss-Hermite rule (weight phi) via Golub-Welsch: the Jacobi
// matrix has zero diagonal and off-diagonals sqrt(k); eigenvalues are the
// nodes and squared first eigencomponents the weights (mu0 = 1).
inline QuadratureRule build_gauss_hermite(int n) {
    if (n < 1 || n > 4000) throw invalid_input_error("gauss-hermite order must be in [1, 4000]");
    QuadratureRule rule;
    rule.kind = QuadKind::gauss_hermite;
    rule.order = n;
    std::vector<double> d(n, 0.0), e(n > 1 ? n - 1 : 0), z(n, 0.0);
    for (int k = 1; k < n; ++k) e[k - 1] = std::sqrt(static_cast<double>(k));
    z[0] = 1.0;
    tridiagonal_ql_first_row(d, e, z);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return d[a] < d[b]; });
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = d[order[i]];
        rule.weights[i] = z[order[i]] * z[order[i]];
    }
    return rule;
}

inline double simpson_segment(double a, double fa, double b, double fb, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double fa,
                                   double b, double fb, double m, double fm, double whole,
                                   double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson_segment(a, fa, m, fm, flm);
    double right = simpson_segment(m, fm, b, fb, frm);
    double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Cached rule lookup; rules are immutable after construction.
inline const QuadratureRule& gauss_hermite(int order = 61) {
    static std::mutex mu;
    static std::map<int, QuadratureRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, detail::build_gauss_hermite(order)).first;
    return it->second;
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10, int max_depth = 40) {
    double m = 0.5 * (a + b);
    double fa = f(a), fb = f(b), fm = f(m);
    double whole = detail::simpson_segment(a, fa, b, fb, fm);
    return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

// integral of f(theta) * phi(theta/scale)/scale dtheta, i.e. the expectation
// of f under N(0, scale^2).
inline double integrate_against_normal(const std::function<double(double)>& f, double scale,
                                       const QuadratureRule& rule = gauss_hermite()) {
    if (!(scale > 0.0)) throw invalid_input_error("integrate_against_normal: scale must be > 0");
    if (rule.kind == QuadKind::adaptive_simpson) {
        // Truncate at +-8 standardized units; the remaining mass is < 1e-14.
        auto g = [&](double t) { return f(t) * normal_pdf(t / scale) / scale; };
        return adaptive_simpson(g, -8.0 * scale, 8.0 * scale);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        double v = f(scale * rule.nodes[k]);
        if (!std::isfinite(v))
            throw invalid_input_error("integrate_against_normal: integrand not finite at node");
        acc += rule.weights[k] * v;
    }
    return acc;
}

inline QuadratureRule adaptive_simpson_rule() {
    QuadratureRule r;
    r.kind = QuadKind::adaptive_simpson;
    r.order = 0;
    return r;
}

// Exact marginal log-likelihood sum_n log M_n with the per-student ability
// integrated out against phi(theta'). Structural parameters are taken from
// `p`; its theta_prime entries are ignored. Desk-scale guard on the total
// node-evaluation count.
inline double marginal_loglik_exact(const ModelSpec& spec, const ParameterSet& p,
                                    const RatingDataset& data,
                                    const QuadratureRule& rule = gauss_hermite()) {
    if (rule.kind != QuadKind::gauss_hermite)
        throw invalid_input_error("marginal_loglik_exact needs a gauss-hermite rule");
    double work = static_cast<double>(data.n_records()) * rule.order;
    if (work > 1e8)
        throw invalid_input_error("marginal_loglik_exact: N*R*I*order budget exceeded");
    if (data.empty()) return 0.0;

    ParameterSet local = p;
    local.theta_prime.assign(data.n_students(), 0.0);
    double total = 0.0;
    const std::size_t K = rule.nodes.size();
    std::vector<double> cell_ll(K);
    for (std::size_t n = 0; n < data.n_students(); ++n) {
        for (std::size_t k = 0; k < K; ++k) {
            double ll = 0.0;
            for (std::int32_t idx : data.student_obs(n)) {
                const Obs& o = data.observations()[idx];
                double s;
                if (spec.family == Family::hrm) {
                    local.theta_prime[n] = rule.nodes[k];
                    double mu = success_probability(spec, local, n, o.rater, o.item);
                    ll += o.y ? std::log(mu) : std::log1p(-mu);
                    continue;
                }
                switch (spec.family) {
                    case Family::tfm:
                        s = local.sigma * rule.nodes[k] - local.delta[o.item] - local.eta[o.rater] +
                            local.alpha;
                        break;
                    case Family::gmf:
                        s = local.rho[o.rater] * local.sigma * rule.nodes[k] - local.eta[o.rater] -
                            local.delta[o.item] + local.alpha;
                        break;
                    default:
                        s = local.sigma * rule.nodes[k] / local.sigma_r[o.rater] -
                            local.eta[o.rater];
                        break;
                }
                ll += o.y ? spec.link.log_cdf(s) : spec.link.log_sf(s);
            }
            cell_ll[k] = ll;
        }
        // log-sum-exp over nodes
        double mx = cell_ll[0];
        for (double v : cell_ll) mx = std::max(mx, v);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += rule.weights[k] * std::exp(cell_ll[k] - mx);
        total += mx + std::log(s);
    }
    return total;
}

}  // namespace ratercap
