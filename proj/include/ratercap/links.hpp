#pragma once

// Link functions for binary response models: cdf F, density f, inverse, and
// numerically stable log F / log(1-F). The log and cloglog links are listed
// for completeness but are experimental: no downstream index constant is
// derived for them, and the log link has a flat segment (F = 1 for s >= 0).

#include <cmath>
#include <limits>
#include <string>

#include "ratercap/common.hpp"

namespace ratercap {

enum class LinkKind { logit, probit, cauchit, log, cloglog };

inline const char* to_string(LinkKind k) {
    switch (k) {
        case LinkKind::logit: return "logit";
        case LinkKind::probit: return "probit";
        case LinkKind::cauchit: return "cauchit";
        case LinkKind::log: return "log";
        case LinkKind::cloglog: return "cloglog";
    }
    return "?";
}

inline LinkKind link_from_string(const std::string& s) {
    if (s == "logit") return LinkKind::logit;
    if (s == "probit") return LinkKind::probit;
    if (s == "cauchit") return LinkKind::cauchit;
    if (s == "log") return LinkKind::log;
    if (s == "cloglog") return LinkKind::cloglog;
    throw invalid_input_error("unknown link: " + s);
}

struct LinkFunction {
    LinkKind kind = LinkKind::logit;

    // F(s) = P(Y=1 | predictor s). Exponential links clamp the predictor;
    // the cauchit link keeps its heavy tails (no overflow to guard).
    double cdf(double s) const {
        if (kind != LinkKind::cauchit) s = clamp_predictor(s);
        switch (kind) {
            case LinkKind::logit:
                return 1.0 / (1.0 + std::exp(-s));
            case LinkKind::probit:
                return normal_cdf(s);
            case LinkKind::cauchit:
                return 0.5 + std::atan(s) / kPi;
            case LinkKind::log:
                return s >= 0.0 ? 1.0 : std::exp(s);
            case LinkKind::cloglog:
                return -std::expm1(-std::exp(s));
        }
        return 0.0;
    }

    // f(s) = F'(s).
    double pdf(double s) const {
        if (kind != LinkKind::cauchit) s = clamp_predictor(s);
        switch (kind) {
            case LinkKind::logit: {
                double e = std::exp(-std::fabs(s));
                double d = 1.0 + e;
                return e / (d * d);
            }
            case LinkKind::probit:
                return normal_pdf(s);
            case LinkKind::cauchit:
                return 1.0 / (kPi * (1.0 + s * s));
            case LinkKind::log:
                return s >= 0.0 ? 0.0 : std::exp(s);
            case LinkKind::cloglog:
                return std::exp(s - std::exp(s));
        }
        return 0.0;
    }

    // log F(s), stable for large |s|.
    double log_cdf(double s) const {
        if (kind != LinkKind::cauchit) s = clamp_predictor(s);
        switch (kind) {
            case LinkKind::logit:
                return -std::log1p(std::exp(-s));
            case LinkKind::probit:
                return std::log(normal_cdf(s));
            case LinkKind::cauchit:
                // atan(1/s) form avoids cancellation deep in the lower tail
                if (s < -1.0) return std::log(std::atan(-1.0 / s) / kPi);
                return std::log(cdf(s));
            case LinkKind::log:
                return s >= 0.0 ? 0.0 : s;
            case LinkKind::cloglog: {
                double es = std::exp(s);
                if (es > 30.0) return 0.0;
                return std::log(-std::expm1(-es));
            }
        }
        return 0.0;
    }

    // log(1 - F(s)), stable for large |s|.
    double log_sf(double s) const {
        if (kind != LinkKind::cauchit) s = clamp_predictor(s);
        switch (kind) {
            case LinkKind::logit:
                return -s - std::log1p(std::exp(-s));
            case LinkKind::probit:
                return std::log(normal_cdf(-s));
            case LinkKind::cauchit:
                if (s > 1.0) return std::log(std::atan(1.0 / s) / kPi);
                return std::log(0.5 - std::atan(s) / kPi);
            case LinkKind::log:
                // F hits 1 exactly at s >= 0; the opposing outcome has
                // probability zero there.
                if (s >= 0.0) return -std::numeric_limits<double>::infinity();
                return std::log(-std::expm1(s));
            case LinkKind::cloglog:
                return -std::exp(s);
        }
        return 0.0;
    }

    // Quantile function F^{-1}(p), p in (0,1).
    double inverse(double p) const {
        if (!(p > 0.0 && p < 1.0))
            throw degenerate_probability_error("link inverse: p must be in (0,1)");
        switch (kind) {
            case LinkKind::logit:
                return std::log(p) - std::log1p(-p);
            case LinkKind::probit:
                return normal_quantile(p);
            case LinkKind::cauchit:
                return std::tan(kPi * (p - 0.5));
            case LinkKind::log:
                return std::log(p);
            case LinkKind::cloglog:
                return std::log(-std::log1p(-p));
        }
        return 0.0;
    }
};

}  // namespace ratercap
