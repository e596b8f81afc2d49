#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flatkit/style.hpp"
#include "flatkit/table.hpp"
#include "flatkit/theme.hpp"

namespace flatkit {

inline const char* kCodeVersion = "0.3.0";

struct LmmRequest {
    std::string response;            // theme_cv | conflict | surprise_curiosity |
                                     // neutral | charge_main
    std::string model;               // human_vs_stage | generated_trend |
                                     // domain_compression
    bool length_covariate = false;   // adds log(1 + realized sentences)
    bool reml = false;
};

struct RunConfig {
    // Inputs. Empty paths disable the metrics that need them.
    std::string stories_path;
    std::string continuations_path;
    std::string affect_path;
    std::string theme_embeddings_path;
    std::string style_embeddings_path;

    // Toggles.
    bool theme_metrics = true;
    bool affect_metrics = true;
    bool style_mmd = true;
    bool style_variance = true;
    bool fixed_k_control = false;
    bool manifold = false;
    bool endpoint_ranges = true;
    std::vector<LmmRequest> lmm_requests;

    // Knobs.
    JumpMetric jump_metric = JumpMetric::l2;
    int cv_sd_ddof = 1;
    bool residualize_length = false;
    bool weight_by_story = false; // pooled means weight stories, not continuations
    std::size_t bootstrap_replicates = 2000;
    std::size_t mmd_bootstrap_replicates = 200;
    std::size_t mmd_subsample_cap = 1000;
    FixedKConfig fixed_k;
    ManifoldConfig manifold_cfg;
    std::vector<std::string> stage_order = {"Base", "SFT", "DPO", "RLVR"};
    std::string endpoint_a = "Human";
    std::string endpoint_b; // empty = last stage present in the data
    double ci_level = 0.95;

    std::uint64_t seed = 20260423;
    std::string output_dir = "out";
};

RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);
void apply_config_overrides(RunConfig& config, std::optional<std::uint64_t> seed,
                            const std::optional<std::string>& out_dir);

// Closed set of exclusion reasons, so downstream tooling can rely on them.
enum class ExclusionReason {
    too_few_sentences,
    degenerate_trajectory,
    missing_embedding,
    missing_affect,
};

const char* exclusion_reason_name(ExclusionReason r);

// One continuation-level value with its story id, or a counted exclusion.
struct AggregateValue {
    std::string story_id;
    std::optional<double> value;
    std::optional<ExclusionReason> exclusion;
};

struct AggregateResult {
    double mean = 0.0;
    std::size_t n_included = 0;
    std::map<ExclusionReason, std::size_t> exclusions;
};

// Unweighted mean over included continuation values; weight_by_story first
// averages within each story. Throws EmptyGroup when nothing remains.
AggregateResult aggregate(const std::vector<AggregateValue>& values,
                          bool weight_by_story = false);

struct RunResult {
    std::vector<ReportTable> tables;
    std::string manifest_path;
    std::vector<std::string> written_files;
};

// Full analysis: computes every toggled metric over all (domain, source,
// cut) groups, emits the report tables and the run manifest. A metric
// failing on one group records an exclusion row and the run continues.
// Deterministic given (inputs, config, seed). Throws ConfigError before any
// work when the config is inconsistent.
RunResult run(const RunConfig& config);

} // namespace flatkit
