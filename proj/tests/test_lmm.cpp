#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "flatkit/error.hpp"
#include "flatkit/lmm.hpp"
#include "flatkit/rng.hpp"

using namespace flatkit;

namespace {

// Simulated two-condition data with a story random intercept.
std::vector<LmmObservation> simulate(std::size_t n_stories, double beta,
                                     double sd_story, double sd_noise,
                                     std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LmmObservation> data;
    for (std::size_t s = 0; s < n_stories; ++s) {
        double intercept = sd_story * rng.normal();
        for (int rep = 0; rep < 2; ++rep) {
            for (const char* stage : {"Human", "RLVR"}) {
                LmmObservation obs;
                obs.group = "story" + std::to_string(s);
                obs.factors["stage"] = stage;
                obs.factors["cut"] = rep == 0 ? "40" : "80";
                double effect = std::string(stage) == "RLVR" ? beta : 0.0;
                obs.response = 1.0 + effect + intercept + sd_noise * rng.normal();
                data.push_back(std::move(obs));
            }
        }
    }
    return data;
}

LmmSpec human_vs_stage_spec() {
    LmmSpec spec;
    spec.response = "metric";
    spec.fixed = {LmmTerm::factor("stage"), LmmTerm::factor("cut")};
    spec.reference_levels["stage"] = "Human";
    return spec;
}

// Plain OLS oracle for the no-random-intercept case.
Eigen::VectorXd ols_fit(const std::vector<LmmObservation>& data) {
    Eigen::MatrixXd x(data.size(), 3);
    Eigen::VectorXd y(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = 1.0;
        x(static_cast<Eigen::Index>(i), 1) =
            data[i].factors.at("stage") == "RLVR" ? 1.0 : 0.0;
        x(static_cast<Eigen::Index>(i), 2) =
            data[i].factors.at("cut") == "80" ? 1.0 : 0.0;
        y(static_cast<Eigen::Index>(i)) = data[i].response;
    }
    return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

} // namespace

TEST_CASE("lmm collapses to OLS when the group variance is zero") {
    auto data = simulate(120, -0.5, /*sd_story=*/0.0, /*sd_noise=*/1.0, 42);
    auto fit = lmm_fit(human_vs_stage_spec(), data);
    auto ols = ols_fit(data);
    REQUIRE(fit.effects.size() == 3);
    CHECK(fit.effects[0].name == "(intercept)");
    CHECK(fit.effects[1].name == "stage[RLVR]");
    CHECK(std::abs(fit.effects[0].estimate - ols(0)) < 1e-6);
    CHECK(std::abs(fit.effects[1].estimate - ols(1)) < 1e-6);
    CHECK(std::abs(fit.effects[2].estimate - ols(2)) < 1e-6);
    CHECK(fit.lambda < 0.05);
}

TEST_CASE("lmm recovers a small stage effect under story clustering") {
    const double beta = -0.02;
    auto data = simulate(500, beta, /*sd_story=*/1.0, /*sd_noise=*/1.0, 7);
    auto fit = lmm_fit(human_vs_stage_spec(), data);
    const auto& stage = fit.effects[1];
    CHECK(stage.name == "stage[RLVR]");
    CHECK(std::abs(stage.estimate - beta) < 3.0 * stage.std_error);
    // variance components close to their true values
    CHECK(fit.var_group == doctest::Approx(1.0).epsilon(0.10));
    CHECK(fit.var_residual == doctest::Approx(1.0).epsilon(0.10));
    CHECK(!fit.boundary_fit);
    CHECK(stage.ci_low <= stage.estimate);
    CHECK(stage.estimate <= stage.ci_high);
}

TEST_CASE("lmm reference level puts contrasts against Human") {
    auto data = simulate(50, 0.3, 0.5, 0.5, 11);
    auto fit = lmm_fit(human_vs_stage_spec(), data);
    bool found = false;
    for (const auto& effect : fit.effects) {
        if (effect.name == "stage[RLVR]") found = true;
        CHECK(effect.name != "stage[Human]"); // Human is the reference
    }
    CHECK(found);
}

TEST_CASE("lmm covariate and interaction terms build full designs") {
    Rng rng(12);
    std::vector<LmmObservation> data;
    for (int s = 0; s < 60; ++s) {
        for (const char* stage : {"Human", "RLVR"}) {
            for (const char* domain : {"a", "b"}) {
                LmmObservation obs;
                obs.group = "s" + std::to_string(s);
                obs.factors["stage"] = stage;
                obs.factors["domain"] = domain;
                obs.covariates["log_len"] = rng.uniform01() * 2.0;
                obs.response = rng.normal() + obs.covariates["log_len"] * 0.5;
                data.push_back(std::move(obs));
            }
        }
    }
    LmmSpec spec;
    spec.response = "metric";
    spec.fixed = {LmmTerm::factor("stage"), LmmTerm::factor("domain"),
                  LmmTerm::interaction("stage", "domain"),
                  LmmTerm::covariate("log_len")};
    spec.reference_levels["stage"] = "Human";
    auto fit = lmm_fit(spec, data);
    // intercept + stage + domain + interaction + covariate
    CHECK(fit.effects.size() == 5);
    bool has_interaction = false, has_covariate = false;
    for (const auto& effect : fit.effects) {
        if (effect.name.find(':') != std::string::npos) has_interaction = true;
        if (effect.name == "log_len") has_covariate = true;
    }
    CHECK(has_interaction);
    CHECK(has_covariate);
}

TEST_CASE("lmm rejects rank-deficient designs") {
    // Two perfectly collinear covariates.
    Rng rng(13);
    std::vector<LmmObservation> data;
    for (int s = 0; s < 20; ++s) {
        for (int i = 0; i < 2; ++i) {
            LmmObservation obs;
            obs.group = "s" + std::to_string(s);
            double x = rng.uniform01();
            obs.covariates["x1"] = x;
            obs.covariates["x2"] = 2.0 * x;
            obs.response = rng.normal();
            data.push_back(std::move(obs));
        }
    }
    LmmSpec spec;
    spec.fixed = {LmmTerm::covariate("x1"), LmmTerm::covariate("x2")};
    CHECK_THROWS_WITH_AS(lmm_fit(spec, data),
                         doctest::Contains("RankDeficientDesign"), Error);
}

TEST_CASE("lmm needs at least two groups") {
    std::vector<LmmObservation> data(4);
    for (auto& obs : data) {
        obs.group = "only";
        obs.response = 1.0;
    }
    CHECK_THROWS_AS(lmm_fit(LmmSpec{}, data), Error);
}

TEST_CASE("lmm boundary fit is reported, not an error") {
    auto data = simulate(40, 0.0, /*sd_story=*/0.0, /*sd_noise=*/0.3, 14);
    auto fit = lmm_fit(human_vs_stage_spec(), data);
    CHECK(fit.lambda >= 0.0);
    // With zero true group variance the profile usually pins at zero.
    if (fit.lambda == 0.0) CHECK(fit.boundary_fit);
}

TEST_CASE("lmm REML flag produces a fit with slightly larger variance") {
    auto data = simulate(80, -0.1, 0.8, 1.0, 15);
    LmmSpec ml = human_vs_stage_spec();
    LmmSpec reml = human_vs_stage_spec();
    reml.reml = true;
    auto fit_ml = lmm_fit(ml, data);
    auto fit_reml = lmm_fit(reml, data);
    CHECK(fit_reml.var_residual >= fit_ml.var_residual * 0.99);
    CHECK(std::abs(fit_ml.effects[1].estimate - fit_reml.effects[1].estimate) < 0.02);
}

TEST_CASE("lmm p-values floor instead of reaching zero") {
    auto data = simulate(300, -2.0, 0.1, 0.05, 16);
    auto fit = lmm_fit(human_vs_stage_spec(), data);
    const auto& stage = fit.effects[1];
    CHECK(stage.p_value > 0.0);
    CHECK(stage.p_value < 1e-10);
}
