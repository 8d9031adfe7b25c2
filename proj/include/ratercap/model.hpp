#pragma once

// The four probability-model families over rating data, with pointwise
// probability, log-likelihood, and Fisher-information evaluation.
//
// Throughout, "theta" in derivatives means the standardized ability: the
// variable integrated against the standard normal density. For the TFM and
// GMF the predictor is S = rho * sigma * theta' - eta - delta + alpha (the
// TFM pins rho = 1), for the probit family S = theta / sigma_r - eta_r, and
// the HRM mixes two level-1 classes through a Rasch level 2.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ratercap/common.hpp"
#include "ratercap/data.hpp"
#include "ratercap/links.hpp"

namespace ratercap {

enum class Family { tfm, gmf, probit, hrm };

inline const char* to_string(Family f) {
    switch (f) {
        case Family::tfm: return "tfm";
        case Family::gmf: return "gmf";
        case Family::probit: return "probit";
        case Family::hrm: return "hrm";
    }
    return "?";
}

inline Family family_from_string(const std::string& s) {
    if (s == "tfm") return Family::tfm;
    if (s == "gmf") return Family::gmf;
    if (s == "probit") return Family::probit;
    if (s == "hrm") return Family::hrm;
    throw invalid_input_error("unknown model family: " + s);
}

// Sign convention for the HRM level-1 predictor. The printed form
// F(c_r - a_ri * xi) makes the pass probability drop for the true-category-1
// class when a > 0; sdt_standard uses F(a_ri * xi - c_r) so capability is
// positive for positive slopes.
enum class HrmSign { as_printed, sdt_standard };

struct ModelSpec {
    Family family = Family::gmf;
    LinkFunction link{LinkKind::logit};
    HrmSign hrm_sign = HrmSign::sdt_standard;

    static ModelSpec tfm() { return ModelSpec{Family::tfm, {LinkKind::logit}, HrmSign::sdt_standard}; }
    static ModelSpec gmf() { return ModelSpec{Family::gmf, {LinkKind::logit}, HrmSign::sdt_standard}; }
    static ModelSpec probit() {
        return ModelSpec{Family::probit, {LinkKind::probit}, HrmSign::sdt_standard};
    }
    static ModelSpec hrm(HrmSign sign = HrmSign::sdt_standard) {
        return ModelSpec{Family::hrm, {LinkKind::logit}, sign};
    }
};

struct ParameterSet {
    std::vector<double> theta_prime;  // standardized ability, length N
    double sigma = 1.0;               // ability scale, > 0
    std::vector<double> rho;          // rater discrimination in [0,1], length R
    std::vector<double> eta;          // rater severity, mean zero, length R
    std::vector<double> delta;        // item difficulty, sum zero, length I
    double alpha = 0.0;               // intercept

    // Probit family: per-rater noise scale; eta_r = alpha_r / sigma_r.
    std::vector<double> sigma_r;

    // HRM: level-1 criteria c_r and slopes a_{r,i}.
    std::vector<double> hrm_c;
    std::vector<std::vector<double>> hrm_a;

    static ParameterSet zeros(std::size_t n, std::size_t r, std::size_t i) {
        ParameterSet p;
        p.theta_prime.assign(n, 0.0);
        p.rho.assign(r, 1.0);
        p.eta.assign(r, 0.0);
        p.delta.assign(i, 0.0);
        return p;
    }

    // Checks the identifiability constraints. theta-moment checks are skipped
    // when N < 2 (a single standardized value cannot have unit variance).
    void validate(const ModelSpec& spec) const {
        if (!(sigma > 0.0)) throw invalid_input_error("sigma must be positive");
        if (theta_prime.size() >= 2) {
            if (std::fabs(mean(theta_prime)) > 1e-6)
                throw invalid_input_error("mean(theta_prime) must be 0");
            if (std::fabs(sd_pop(theta_prime) - 1.0) > 1e-6)
                throw invalid_input_error("var(theta_prime) must be 1");
        }
        if (!eta.empty() && std::fabs(mean(eta)) > 1e-8)
            throw invalid_input_error("mean(eta) must be 0");
        double dsum = 0.0;
        for (double d : delta) dsum += d;
        if (!delta.empty() && std::fabs(dsum) > 1e-8)
            throw invalid_input_error("sum(delta) must be 0");
        for (double r : rho)
            if (r < 0.0 || r > 1.0) throw invalid_input_error("rho must lie in [0,1]");
        if (spec.family == Family::tfm) {
            for (double r : rho)
                if (r != 1.0) throw invalid_input_error("TFM requires all rho fixed to 1");
        }
        if (spec.family == Family::probit) {
            if (sigma_r.size() != eta.size())
                throw invalid_input_error("probit family needs sigma_r per rater");
            for (double s : sigma_r)
                if (!(s > 0.0)) throw invalid_input_error("sigma_r must be positive");
        }
        if (spec.family == Family::hrm) {
            if (hrm_c.size() != eta.size() || hrm_a.size() != eta.size())
                throw invalid_input_error("hrm family needs c_r and a_{r,i}");
            for (const auto& row : hrm_a)
                if (row.size() != delta.size())
                    throw invalid_input_error("hrm slope matrix must be R x I");
        }
    }

    void check_indices(std::size_t n, std::size_t r, std::size_t i) const {
        if (n >= theta_prime.size()) throw invalid_input_error("student index out of range");
        if (r >= eta.size()) throw invalid_input_error("rater index out of range");
        if (i >= delta.size()) throw invalid_input_error("item index out of range");
    }
};

// HRM level-1 predictor for latent class xi in {0,1}.
inline double hrm_level1_predictor(const ModelSpec& spec, const ParameterSet& p, std::size_t r,
                                   std::size_t i, int latent_class) {
    double a = p.hrm_a[r][i];
    double c = p.hrm_c[r];
    double s = (spec.hrm_sign == HrmSign::as_printed) ? c - a * latent_class
                                                      : a * latent_class - c;
    return s;
}

// HRM level-2 (Rasch) probability of the true category being 1.
inline double hrm_level2_probability(const ParameterSet& p, std::size_t n, std::size_t i) {
    LinkFunction logit{LinkKind::logit};
    return logit.cdf(p.sigma * p.theta_prime[n] - p.delta[i] + p.alpha);
}

// Linear predictor S_nri. For the HRM the predictor depends on the latent
// class; pass hrm_latent_class in {0,1} (defaults to 1).
inline double linear_predictor(const ModelSpec& spec, const ParameterSet& p, std::size_t n,
                               std::size_t r, std::size_t i, int hrm_latent_class = 1) {
    p.check_indices(n, r, i);
    switch (spec.family) {
        case Family::tfm:
            if (p.rho[r] != 1.0)
                throw invalid_input_error("TFM evaluated with rho != 1");
            return p.sigma * p.theta_prime[n] - p.delta[i] - p.eta[r] + p.alpha;
        case Family::gmf:
            return p.rho[r] * p.sigma * p.theta_prime[n] - p.eta[r] - p.delta[i] + p.alpha;
        case Family::probit: {
            if (r >= p.sigma_r.size())
                throw invalid_input_error("probit predictor needs sigma_r for this rater");
            double theta = p.sigma * p.theta_prime[n];
            return theta / p.sigma_r[r] - p.eta[r];
        }
        case Family::hrm:
            if (r >= p.hrm_c.size())
                throw invalid_input_error("hrm predictor needs c_r/a_ri for this rater");
            return hrm_level1_predictor(spec, p, r, i, hrm_latent_class);
    }
    return 0.0;
}

// mu_nri = P(Y = 1). For the HRM this is the two-class mixture
// F1 * F_{2,1} + (1 - F1) * F_{2,0}.
inline double success_probability(const ModelSpec& spec, const ParameterSet& p, std::size_t n,
                                  std::size_t r, std::size_t i) {
    if (spec.family == Family::hrm) {
        p.check_indices(n, r, i);
        double f1 = hrm_level2_probability(p, n, i);
        double f21 = spec.link.cdf(hrm_level1_predictor(spec, p, r, i, 1));
        double f20 = spec.link.cdf(hrm_level1_predictor(spec, p, r, i, 0));
        return f1 * f21 + (1.0 - f1) * f20;
    }
    return spec.link.cdf(linear_predictor(spec, p, n, r, i));
}

// d mu / d theta where theta is the standardized ability.
inline double dmu_dtheta(const ModelSpec& spec, const ParameterSet& p, std::size_t n,
                         std::size_t r, std::size_t i) {
    switch (spec.family) {
        case Family::tfm:
            return p.sigma * spec.link.pdf(linear_predictor(spec, p, n, r, i));
        case Family::gmf:
            return p.rho[r] * p.sigma * spec.link.pdf(linear_predictor(spec, p, n, r, i));
        case Family::probit:
            return spec.link.pdf(linear_predictor(spec, p, n, r, i)) / p.sigma_r[r];
        case Family::hrm: {
            double f1 = hrm_level2_probability(p, n, i);
            double f21 = spec.link.cdf(hrm_level1_predictor(spec, p, r, i, 1));
            double f20 = spec.link.cdf(hrm_level1_predictor(spec, p, r, i, 0));
            return (f21 - f20) * p.sigma * f1 * (1.0 - f1);
        }
    }
    return 0.0;
}

struct LogLikelihoodResult {
    double value = 0.0;
    // Set when a zero-probability outcome was observed (possible only for the
    // experimental log/cloglog links); value is then -inf.
    bool degenerate = false;
};

// Sum over records of y log mu + (1-y) log(1-mu), using the stable per-link
// log forms. Finite for all finite parameters under logit/probit/cauchit.
inline LogLikelihoodResult log_likelihood(const ModelSpec& spec, const ParameterSet& p,
                                          const RatingDataset& data) {
    LogLikelihoodResult out;
    for (const Obs& o : data.observations()) {
        double term;
        if (spec.family == Family::hrm) {
            double mu = success_probability(spec, p, o.student, o.rater, o.item);
            term = o.y ? std::log(mu) : std::log1p(-mu);
        } else {
            double s = linear_predictor(spec, p, o.student, o.rater, o.item);
            term = o.y ? spec.link.log_cdf(s) : spec.link.log_sf(s);
        }
        if (!std::isfinite(term)) {
            out.degenerate = true;
            out.value = -std::numeric_limits<double>::infinity();
            return out;
        }
        out.value += term;
    }
    return out;
}

// Fisher information of one rating about the standardized ability:
// (d mu / d theta)^2 / (mu (1 - mu)).
inline double fisher_information(const ModelSpec& spec, const ParameterSet& p, std::size_t n,
                                 std::size_t r, std::size_t i) {
    double mu = success_probability(spec, p, n, r, i);
    if (!(mu > 0.0 && mu < 1.0))
        throw degenerate_probability_error("fisher_information: mu must lie strictly in (0,1)");
    double d = dmu_dtheta(spec, p, n, r, i);
    return d * d / (mu * (1.0 - mu));
}

}  // namespace ratercap
