#pragma once

// Logistic-regression initializer: additive student/rater/item effects under
// the logit link, fitted by iteratively reweighted least squares with ridge
// stabilization, then recentered onto the identifiability constraints with
// the means absorbed into the intercept.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ratercap/common.hpp"
#include "ratercap/data.hpp"
#include "ratercap/linalg.hpp"
#include "ratercap/links.hpp"

namespace ratercap {

struct GlmInit {
    std::vector<double> theta;  // per-student effect, mean zero (slope-1 scale)
    std::vector<double> eta;    // mean zero
    std::vector<double> delta;  // sum zero
    double alpha = 0.0;
    bool converged = false;
    bool separation_flagged = false;
    int iterations = 0;
};

namespace detail {

struct UnionFind {
    std::vector<std::int32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::int32_t find(std::int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) { parent[find(a)] = find(b); }
};

}  // namespace detail

// Throws identifiability_error if the student/rater/item design graph is
// disconnected, naming members of the extra components.
inline void check_design_connected(const RatingDataset& data) {
    const std::size_t N = data.n_students(), R = data.n_raters(), I = data.n_items();
    detail::UnionFind uf(N + R + I);
    for (const Obs& o : data.observations()) {
        uf.unite(o.student, static_cast<std::int32_t>(N) + o.rater);
        uf.unite(o.student, static_cast<std::int32_t>(N + R) + o.item);
    }
    std::vector<std::int32_t> roots;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < N + R + I; ++k) {
        std::int32_t root = uf.find(static_cast<std::int32_t>(k));
        bool known = false;
        for (std::int32_t r : roots) known = known || r == root;
        if (!known) {
            roots.push_back(root);
            std::string label = k < N ? ("student " + data.student_ids()[k])
                                      : (k < N + R ? ("rater " + data.rater_ids()[k - N])
                                                   : ("item " + data.item_ids()[k - N - R]));
            names.push_back(label);
        }
    }
    if (roots.size() > 1) {
        std::string msg = "design graph has " + std::to_string(roots.size()) +
                          " disconnected components; representatives:";
        for (const auto& n : names) msg += " [" + n + "]";
        throw identifiability_error(msg);
    }
}

inline GlmInit initialize_glm(const RatingDataset& data, double ridge = 1e-6,
                              int max_iterations = 30) {
    if (data.empty()) throw invalid_input_error("initialize_glm: dataset is empty");
    check_design_connected(data);

    const std::size_t N = data.n_students(), R = data.n_raters(), I = data.n_items();
    const std::size_t P = N + R + I + 1;
    const std::size_t off_eta = N, off_delta = N + R, off_alpha = N + R + I;
    std::vector<double> beta(P, 0.0);
    LinkFunction logit{LinkKind::logit};

    GlmInit out;
    const double clamp_at = 8.0;
    for (int iter = 0; iter < max_iterations; ++iter) {
        Matrix A(P, P);
        std::vector<double> b(P, 0.0);
        for (std::size_t p = 0; p < P; ++p) A(p, p) = ridge;
        for (const Obs& o : data.observations()) {
            std::size_t idx[4] = {static_cast<std::size_t>(o.student),
                                  off_eta + o.rater, off_delta + o.item, off_alpha};
            double sign[4] = {1.0, -1.0, -1.0, 1.0};
            double s = beta[idx[0]] - beta[idx[1]] - beta[idx[2]] + beta[idx[3]];
            double mu = logit.cdf(s);
            double w = std::max(mu * (1.0 - mu), 1e-10);
            double z = s + (o.y - mu) / w;
            for (int p = 0; p < 4; ++p) {
                b[idx[p]] += sign[p] * w * z;
                for (int q = 0; q < 4; ++q) A(idx[p], idx[q]) += sign[p] * sign[q] * w;
            }
        }
        std::vector<double> beta_new = solve_spd(A, b);
        double max_change = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            if (std::fabs(beta_new[p]) > clamp_at) {
                beta_new[p] = beta_new[p] > 0.0 ? clamp_at : -clamp_at;
                out.separation_flagged = true;
            }
            max_change = std::max(max_change, std::fabs(beta_new[p] - beta[p]));
        }
        beta = beta_new;
        out.iterations = iter + 1;
        if (max_change < 1e-8) {
            out.converged = true;
            break;
        }
    }

    out.theta.assign(beta.begin(), beta.begin() + N);
    out.eta.assign(beta.begin() + off_eta, beta.begin() + off_delta);
    out.delta.assign(beta.begin() + off_delta, beta.begin() + off_alpha);
    out.alpha = beta[off_alpha];

    // Recenter onto the constraint set, folding the means into alpha.
    double m_t = mean(out.theta), m_e = mean(out.eta), m_d = mean(out.delta);
    for (double& t : out.theta) t -= m_t;
    for (double& e : out.eta) e -= m_e;
    for (double& d : out.delta) d -= m_d;
    out.alpha += m_t - m_e - m_d;
    return out;
}

}  // namespace ratercap
