#pragma once

#include <map>
#include <string>
#include <vector>

namespace flatkit {

// One observation for a mixed-effects fit: a response, categorical factor
// levels, numeric covariates, and the random-intercept grouping value.
struct LmmObservation {
    std::string group; // story id
    double response = 0.0;
    std::map<std::string, std::string> factors;
    std::map<std::string, double> covariates;
};

struct LmmTerm {
    enum class Kind { factor, covariate, interaction };
    Kind kind;
    std::string name;   // factor or covariate name
    std::string name_b; // second factor for interactions

    static LmmTerm factor(std::string n) { return {Kind::factor, std::move(n), {}}; }
    static LmmTerm covariate(std::string n) { return {Kind::covariate, std::move(n), {}}; }
    static LmmTerm interaction(std::string a, std::string b) {
        return {Kind::interaction, std::move(a), std::move(b)};
    }
};

// y = X beta + u_group + eps with a single random intercept. Categorical
// terms use reference-level dummy coding; the reference is the first level
// in sorted order unless overridden in reference_levels. The variance ratio
// lambda = var_u / var_eps is profiled out by maximum likelihood (REML
// optional) with a grouped GLS solve per candidate.
struct LmmSpec {
    std::string response;       // metric id, metadata only
    std::vector<LmmTerm> fixed; // intercept is implicit
    std::string random_intercept = "story";
    std::map<std::string, std::string> reference_levels;
    bool reml = false;
};

struct LmmEffect {
    std::string name; // e.g. "stage[RLVR]"
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
};

struct LmmFit {
    std::vector<LmmEffect> effects; // intercept first
    double var_group = 0.0;         // sigma^2_u
    double var_residual = 0.0;      // sigma^2_eps
    double lambda = 0.0;            // var_group / var_residual
    bool boundary_fit = false;      // lambda pinned at the search boundary
    std::size_t n_obs = 0;
    std::size_t n_groups = 0;
    double log_likelihood = 0.0;
};

// Fits the model. Throws RankDeficientDesign when the fixed design is not
// full rank and requires at least 2 groups. A boundary lambda (no detectable
// group variance) is reported via boundary_fit, not an error.
LmmFit lmm_fit(const LmmSpec& spec, const std::vector<LmmObservation>& data);

} // namespace flatkit
