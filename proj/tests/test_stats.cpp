#include <doctest.h>

#include <cmath>

#include "flatkit/error.hpp"
#include "flatkit/numeric.hpp"
#include "flatkit/rng.hpp"
#include "flatkit/stats.hpp"

using namespace flatkit;

namespace {

double flat_mean(const std::vector<const std::vector<double>*>& stories) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto* s : stories) {
        for (double v : *s) {
            sum += v;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

} // namespace

TEST_CASE("single story gives a degenerate interval") {
    std::vector<std::vector<double>> stories = {{1.0, 2.0, 3.0}};
    auto est = story_bootstrap_ci(stories, flat_mean, 500, 7);
    CHECK(est.value == doctest::Approx(2.0));
    CHECK(est.ci_low == est.value);
    CHECK(est.ci_high == est.value);
}

TEST_CASE("B=0 degrades to a point-only estimate") {
    std::vector<std::vector<double>> stories = {{1.0}, {3.0}};
    auto est = story_bootstrap_ci(stories, flat_mean, 0, 7);
    CHECK(est.method == CiMethod::point_only);
    CHECK(est.ci_low == est.value);
    CHECK(est.ci_high == est.value);
    CHECK(std::isfinite(est.ci_low));
}

TEST_CASE("bootstrap determinism: identical inputs give identical intervals") {
    std::vector<std::vector<double>> stories;
    Rng rng(3);
    for (int s = 0; s < 25; ++s) {
        std::vector<double> vals;
        for (int i = 0; i < 4; ++i) vals.push_back(rng.normal());
        stories.push_back(vals);
    }
    auto a = story_bootstrap_ci(stories, flat_mean, 400, 123);
    auto b = story_bootstrap_ci(stories, flat_mean, 400, 123);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
    auto c = story_bootstrap_ci(stories, flat_mean, 400, 124);
    CHECK((a.ci_low != c.ci_low || a.ci_high != c.ci_high));
}

TEST_CASE("bootstrap interval brackets the point for mean statistics") {
    std::vector<std::vector<double>> stories;
    Rng rng(4);
    for (int s = 0; s < 40; ++s) stories.push_back({rng.normal(), rng.normal()});
    auto est = story_bootstrap_mean(stories, 1000, 5);
    CHECK(est.ci_low <= est.value);
    CHECK(est.value <= est.ci_high);
}

TEST_CASE("story bootstrap coverage on synthetic i.i.d. data") {
    // Moderate-size Monte Carlo: the 95% interval for a mean of story means
    // should cover the true mean about 95% of the time.
    Rng rng(2025);
    int covered = 0;
    const int simulations = 300;
    for (int sim = 0; sim < simulations; ++sim) {
        std::vector<std::vector<double>> stories;
        for (int s = 0; s < 30; ++s) {
            std::vector<double> vals;
            int n = 2 + static_cast<int>(rng.below(3));
            for (int i = 0; i < n; ++i) vals.push_back(rng.normal());
            stories.push_back(vals);
        }
        auto est = story_bootstrap_mean(stories, 400, mix_seed(9000, sim));
        if (est.ci_low <= 0.0 && 0.0 <= est.ci_high) ++covered;
    }
    double coverage = static_cast<double>(covered) / simulations;
    CHECK(coverage > 0.90);
    CHECK(coverage <= 1.0);
}

TEST_CASE("component-bound interval sums values and bounds") {
    MetricEstimate a{0.21, 0.206, 0.214, 100, CiMethod::story_bootstrap, 1};
    MetricEstimate b{0.20, 0.196, 0.204, 100, CiMethod::story_bootstrap, 1};
    auto sum = component_bound_ci(a, b);
    CHECK(sum.value == doctest::Approx(0.41));
    CHECK(sum.ci_low == doctest::Approx(0.402));
    CHECK(sum.ci_high == doctest::Approx(0.418));
    CHECK(sum.method == CiMethod::component_bound);
    // the sum of point estimates always lies inside
    CHECK(sum.ci_low <= a.value + b.value);
    CHECK(a.value + b.value <= sum.ci_high);
}

TEST_CASE("component-bound of zero-width inputs is zero-width") {
    MetricEstimate a{0.3, 0.3, 0.3, 10, CiMethod::story_bootstrap, 1};
    MetricEstimate b{0.1, 0.1, 0.1, 10, CiMethod::story_bootstrap, 1};
    auto sum = component_bound_ci(a, b);
    CHECK(sum.ci_low == sum.ci_high);
}

TEST_CASE("component-bound rejects point-only inputs") {
    MetricEstimate a{0.3, 0.3, 0.3, 10, CiMethod::story_bootstrap, 1};
    MetricEstimate b{0.1, 0.1, 0.1, 10, CiMethod::point_only, 1};
    CHECK_THROWS_WITH_AS(component_bound_ci(a, b), doctest::Contains("MissingInterval"),
                         Error);
}

TEST_CASE("residualize removes the linear trend exactly for q = 2T") {
    std::vector<double> lengths = {2.0, 5.0, 9.0, 14.0};
    std::vector<double> values;
    for (double t : lengths) values.push_back(2.0 * t);
    auto res = residualize(values, lengths);
    double mean_q = mean(values);
    for (double v : res.residualized) CHECK(v == doctest::Approx(mean_q));
}

TEST_CASE("residualize keeps unrelated values and kills correlation") {
    Rng rng(6);
    std::vector<double> lengths, values;
    for (int i = 0; i < 200; ++i) {
        lengths.push_back(5.0 + static_cast<double>(rng.below(40)));
        values.push_back(rng.normal());
    }
    auto res = residualize(values, lengths);
    CHECK(std::abs(pearson_corr(res.residualized, lengths)) < 1e-10);
    CHECK(mean(res.residualized) == doctest::Approx(mean(values)).epsilon(1e-12));
    // q independent of T: residualized values stay close to the originals
    double max_shift = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        max_shift = std::max(max_shift, std::abs(values[i] - res.residualized[i]));
    }
    CHECK(max_shift < 1.0); // fitted slope is near zero
}

TEST_CASE("residualize is idempotent") {
    Rng rng(7);
    std::vector<double> lengths, values;
    for (int i = 0; i < 50; ++i) {
        double t = 3.0 + static_cast<double>(rng.below(30));
        lengths.push_back(t);
        values.push_back(0.3 * t + rng.normal());
    }
    auto once = residualize(values, lengths);
    auto twice = residualize(once.residualized, lengths);
    for (std::size_t i = 0; i < values.size(); ++i) {
        CHECK(std::abs(once.residualized[i] - twice.residualized[i]) < 1e-10);
    }
}

TEST_CASE("residualize rejects constant lengths") {
    CHECK_THROWS_WITH_AS(residualize({1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}),
                         doctest::Contains("ConstantLength"), Error);
}

TEST_CASE("holm-bonferroni hand example") {
    auto result = holm_bonferroni({0.01, 0.04, 0.03}, 0.05);
    CHECK(result.reject == std::vector<bool>{true, false, false});
    REQUIRE(result.adjusted.size() == 3);
    CHECK(result.adjusted[0] == doctest::Approx(0.03));
    CHECK(result.adjusted[1] == doctest::Approx(0.06));
    CHECK(result.adjusted[2] == doctest::Approx(0.06));
}

TEST_CASE("holm-bonferroni single test is uncorrected") {
    auto result = holm_bonferroni({0.04}, 0.05);
    CHECK(result.reject == std::vector<bool>{true});
    CHECK(result.adjusted[0] == doctest::Approx(0.04));
}

TEST_CASE("holm-bonferroni all-zero p-values") {
    auto result = holm_bonferroni({0.0, 0.0, 0.0}, 0.05);
    CHECK(result.reject == std::vector<bool>{true, true, true});
    for (double p : result.adjusted) CHECK(p == 0.0);
}

TEST_CASE("holm-bonferroni rejects invalid p-values") {
    CHECK_THROWS_WITH_AS(holm_bonferroni({0.5, 1.2}), doctest::Contains("InvalidP"),
                         Error);
    CHECK_THROWS_AS(holm_bonferroni({-0.1}), Error);
    CHECK_THROWS_AS(holm_bonferroni({std::nan("")}), Error);
}

TEST_CASE("holm dominance properties over random p-vectors") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> ps;
        std::size_t m = 1 + rng.below(10);
        for (std::size_t i = 0; i < m; ++i) ps.push_back(rng.uniform01());
        auto result = holm_bonferroni(ps, 0.05);
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(result.adjusted[i] >= ps[i]);          // adjusted >= raw
            CHECK(result.adjusted[i] <= 1.0);
            if (result.reject[i]) CHECK(ps[i] <= 0.05);  // subset of uncorrected
            // reject iff adjusted <= alpha
            CHECK(result.reject[i] == (result.adjusted[i] <= 0.05));
        }
    }
}

TEST_CASE("range reduction hand values") {
    auto cell = [](const std::string& d, std::vector<double> means) {
        DomainCell c;
        c.domain = d;
        for (double m : means) c.story_values.push_back({m});
        return c;
    };
    // means (0.105, 0.098, 0.110) -> range 0.012
    std::vector<DomainCell> a = {cell("x", {0.105}), cell("y", {0.098}),
                                 cell("z", {0.110})};
    auto rr = range_reduction(a, a, 0, 1);
    CHECK(rr.range_a.value == doctest::Approx(0.012));
    CHECK(rr.reduction == doctest::Approx(0.0)); // identical endpoints

    // endpoint B collapses to a point: reduction 100%
    std::vector<DomainCell> b = {cell("x", {0.2}), cell("y", {0.2}), cell("z", {0.2})};
    auto full = range_reduction(a, b, 0, 1);
    CHECK(full.range_b.value == doctest::Approx(0.0));
    CHECK(full.reduction == doctest::Approx(1.0));
}

TEST_CASE("range reduction needs two domains") {
    DomainCell only;
    only.domain = "x";
    only.story_values = {{1.0}};
    CHECK_THROWS_WITH_AS(range_reduction({only}, {only}, 10, 1),
                         doctest::Contains("TooFewDomains"), Error);
}

TEST_CASE("range reduction bootstrap intervals are deterministic and ordered") {
    Rng rng(9);
    std::vector<DomainCell> a, b;
    for (const char* d : {"d1", "d2", "d3"}) {
        DomainCell ca, cb;
        ca.domain = cb.domain = d;
        for (int s = 0; s < 20; ++s) {
            ca.story_values.push_back({rng.normal() + (d[1] - '0') * 0.5});
            cb.story_values.push_back({rng.normal() + (d[1] - '0') * 0.1});
        }
        a.push_back(ca);
        b.push_back(cb);
    }
    auto r1 = range_reduction(a, b, 300, 11);
    auto r2 = range_reduction(a, b, 300, 11);
    CHECK(r1.range_a.ci_low == r2.range_a.ci_low);
    CHECK(r1.range_b.ci_high == r2.range_b.ci_high);
    CHECK(r1.range_a.ci_low <= r1.range_a.ci_high);
    CHECK(r1.reduction > 0.0); // endpoint B has a narrower spread
}

TEST_CASE("quantile interpolation matches hand values") {
    std::vector<double> xs = {4.0, 1.0, 3.0, 2.0};
    CHECK(quantile(xs, 0.0) == 1.0);
    CHECK(quantile(xs, 1.0) == 4.0);
    CHECK(quantile(xs, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(xs, 0.25) == doctest::Approx(1.75));
    CHECK(median({1.0, 2.0, 10.0}) == 2.0);
}
