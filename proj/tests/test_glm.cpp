#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ratercap/glm.hpp"
#include "ratercap/rng.hpp"

using namespace ratercap;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = mean(a), mb = mean(b), num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += sqr(a[i] - ma);
        db += sqr(b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("all-ones data: no contrast information, intercept clamped") {
    std::vector<RatingRecord> recs;
    for (int n = 0; n < 10; ++n)
        for (int r = 0; r < 3; ++r)
            for (int i = 0; i < 4; ++i)
                recs.emplace_back("S" + std::to_string(n), "R" + std::to_string(r),
                                  "I" + std::to_string(i), 1);
    RatingDataset data = RatingDataset::from_records(recs);
    GlmInit g = initialize_glm(data);
    CHECK(g.separation_flagged);
    CHECK(g.alpha > 2.0);
    for (double t : g.theta) CHECK(std::fabs(t) < 0.2);
    for (double e : g.eta) CHECK(std::fabs(e) < 0.2);
    for (double d : g.delta) CHECK(std::fabs(d) < 0.2);
}

TEST_CASE("balanced synthetic tfm data recovers severities (correlation)") {
    const std::size_t N = 200, R = 10, I = 10;
    CounterRng rng(2024);
    LinkFunction logit{LinkKind::logit};
    std::vector<double> theta(N), eta(R), delta(I);
    for (std::size_t n = 0; n < N; ++n) theta[n] = rng.normal(1, n);
    for (std::size_t r = 0; r < R; ++r) eta[r] = (static_cast<double>(r) - 4.5) / 4.0;
    for (std::size_t i = 0; i < I; ++i) delta[i] = (static_cast<double>(i) - 4.5) / 6.0;
    std::vector<RatingRecord> recs;
    std::uint64_t c = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t i = 0; i < I; ++i) {
                double p = logit.cdf(theta[n] - eta[r] - delta[i]);
                recs.emplace_back("S" + std::to_string(n), "R" + std::to_string(r),
                                  "I" + std::to_string(i), rng.bernoulli(p, 2, c++) ? 1 : 0);
            }
    RatingDataset data = RatingDataset::from_records(recs);
    GlmInit g = initialize_glm(data);
    CHECK(g.converged);
    // the dataset interns ids in first-seen order, which matches construction
    CHECK(pearson(g.eta, eta) >= 0.95);
    CHECK(pearson(g.delta, delta) >= 0.95);
    CHECK(pearson(g.theta, theta) >= 0.9);
    // constraint recentering
    CHECK(std::fabs(mean(g.eta)) <= 1e-10);
    CHECK(std::fabs(mean(g.delta)) <= 1e-10);
    CHECK(std::fabs(mean(g.theta)) <= 1e-10);
}

TEST_CASE("single rater, single item: theta ranking equals score ranking") {
    std::vector<RatingRecord> recs;
    std::vector<int> scores = {1, 0, 1, 1, 0, 0, 1, 0};
    for (std::size_t n = 0; n < scores.size(); ++n)
        recs.emplace_back("S" + std::to_string(n), "R1", "I1", scores[n]);
    RatingDataset data = RatingDataset::from_records(recs);
    GlmInit g = initialize_glm(data);
    for (std::size_t a = 0; a < scores.size(); ++a)
        for (std::size_t b = 0; b < scores.size(); ++b) {
            if (scores[a] > scores[b]) CHECK(g.theta[a] > g.theta[b]);
            if (scores[a] == scores[b]) CHECK(g.theta[a] == doctest::Approx(g.theta[b]));
        }
}

TEST_CASE("disconnected design graph raises an identifiability error") {
    // Two islands: {S1,S2} x {RA} x {I1} and {S3,S4} x {RB} x {I2}.
    std::vector<RatingRecord> recs = {
        {"S1", "RA", "I1", 1},
        {"S2", "RA", "I1", 0},
        {"S3", "RB", "I2", 1},
        {"S4", "RB", "I2", 0},
    };
    RatingDataset data = RatingDataset::from_records(recs);
    CHECK_THROWS_AS(initialize_glm(data), identifiability_error);
    try {
        initialize_glm(data);
    } catch (const identifiability_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("2 disconnected components") != std::string::npos);
        CHECK(msg.find("student") != std::string::npos);
    }
}

TEST_CASE("a rater with all-identical scores is clamped, not divergent") {
    CounterRng rng(7);
    std::vector<RatingRecord> recs;
    std::uint64_t c = 0;
    for (int n = 0; n < 20; ++n)
        for (int i = 0; i < 3; ++i) {
            recs.emplace_back("S" + std::to_string(n), "Rok", "I" + std::to_string(i),
                              rng.bernoulli(0.5, 1, c++) ? 1 : 0);
            recs.emplace_back("S" + std::to_string(n), "Rhard", "I" + std::to_string(i), 0);
        }
    RatingDataset data = RatingDataset::from_records(recs);
    GlmInit g = initialize_glm(data);
    CHECK(g.separation_flagged);
    for (double e : g.eta) {
        CHECK(std::isfinite(e));
        CHECK(std::fabs(e) <= 16.0);  // clamp kept effects bounded (pre-centering +-8)
    }
}

TEST_CASE("empty dataset is rejected") {
    RatingDataset data;
    CHECK_THROWS_AS(initialize_glm(data), invalid_input_error);
}
