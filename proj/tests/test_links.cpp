#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ratercap/links.hpp"

using namespace ratercap;

namespace {

const std::vector<LinkKind> kAllLinks = {LinkKind::logit, LinkKind::probit, LinkKind::cauchit,
                                         LinkKind::log, LinkKind::cloglog};

// The log link is flat (F = 1) above zero; restrict its smooth-region checks.
bool in_smooth_region(LinkKind k, double s) {
    if (k == LinkKind::log) return s < -1e-3;
    return true;
}

}  // namespace

TEST_CASE("cdf limits and monotonicity on a grid") {
    for (LinkKind kind : kAllLinks) {
        LinkFunction link{kind};
        // F(-inf) = 0 and F(+inf) = 1; the cauchit tail decays like 1/(pi s)
        CHECK(link.cdf(-1e12) <= 1e-9);
        CHECK(link.cdf(1e12) >= 1.0 - 1e-9);
        double prev = -1.0;
        for (int i = 0; i < 1000; ++i) {
            double s = -10.0 + 20.0 * i / 999.0;
            double f = link.cdf(s);
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
            // Strict increase wherever the value has not saturated at double
            // precision (probit/cloglog round to exactly 1 in the far tail).
            bool saturated = f >= 1.0 - 1e-12 || prev >= 1.0 - 1e-12;
            if (in_smooth_region(kind, s) && !saturated) {
                CHECK(f > prev);
            } else {
                CHECK(f >= prev);
            }
            prev = f;
        }
    }
}

TEST_CASE("density matches the cdf derivative by central differences") {
    const double h = 1e-6;
    for (LinkKind kind : kAllLinks) {
        LinkFunction link{kind};
        for (int i = 0; i <= 1000; ++i) {
            double s = -10.0 + 20.0 * i / 1000.0;
            if (!in_smooth_region(kind, s + h) || !in_smooth_region(kind, s - h)) continue;
            double numeric = (link.cdf(s + h) - link.cdf(s - h)) / (2.0 * h);
            CHECK(std::fabs(numeric - link.pdf(s)) <= 1e-6);
        }
    }
}

TEST_CASE("density is nonnegative everywhere") {
    for (LinkKind kind : kAllLinks) {
        LinkFunction link{kind};
        for (double s = -30.0; s <= 30.0; s += 0.37) CHECK(link.pdf(s) >= 0.0);
    }
}

TEST_CASE("log probabilities are stable and consistent") {
    for (LinkKind kind : kAllLinks) {
        LinkFunction link{kind};
        for (double s : {-20.0, -5.0, -1.0, -0.5, 0.5, 1.0, 5.0, 20.0}) {
            if (kind == LinkKind::log && s >= 0.0) continue;
            double lc = link.log_cdf(s), ls = link.log_sf(s);
            CHECK(std::isfinite(lc));
            CHECK(std::isfinite(ls));
            CHECK(std::exp(lc) + std::exp(ls) == doctest::Approx(1.0).epsilon(1e-10));
        }
        // extreme predictors stay finite after clamping (log link's flat side aside)
        if (kind != LinkKind::log) {
            CHECK(std::isfinite(link.log_cdf(-1e6)));
            CHECK(std::isfinite(link.log_sf(1e6)));
        }
    }
}

TEST_CASE("log link hits an exact zero-probability branch") {
    LinkFunction link{LinkKind::log};
    CHECK(link.cdf(0.0) == 1.0);
    CHECK(std::isinf(link.log_sf(0.5)));
}

TEST_CASE("inverse round-trips through the cdf") {
    for (LinkKind kind : kAllLinks) {
        LinkFunction link{kind};
        for (double p : {0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999}) {
            double s = link.inverse(p);
            CHECK(link.cdf(s) == doctest::Approx(p).epsilon(1e-8));
        }
        CHECK_THROWS_AS(link.inverse(0.0), degenerate_probability_error);
        CHECK_THROWS_AS(link.inverse(1.0), degenerate_probability_error);
    }
}

TEST_CASE("logistic and probit values at zero") {
    LinkFunction logit{LinkKind::logit};
    LinkFunction probit{LinkKind::probit};
    CHECK(logit.cdf(0.0) == doctest::Approx(0.5));
    CHECK(probit.cdf(0.0) == doctest::Approx(0.5));
    CHECK(logit.pdf(0.0) == doctest::Approx(0.25));
    CHECK(probit.pdf(0.0) == doctest::Approx(1.0 / kSqrt2Pi));
}

TEST_CASE("normal quantile agrees with the cdf to high accuracy") {
    for (double p = 0.0005; p < 1.0; p += 0.0101) {
        double x = normal_quantile(p);
        CHECK(normal_cdf(x) == doctest::Approx(p).epsilon(1e-12));
    }
}
