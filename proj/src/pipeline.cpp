#include "flatkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "flatkit/affect.hpp"
#include "flatkit/error.hpp"
#include "flatkit/lmm.hpp"
#include "flatkit/stats.hpp"

namespace flatkit {

const char* exclusion_reason_name(ExclusionReason r) {
    switch (r) {
    case ExclusionReason::too_few_sentences: return "too_few_sentences";
    case ExclusionReason::degenerate_trajectory: return "degenerate_trajectory";
    case ExclusionReason::missing_embedding: return "missing_embedding";
    case ExclusionReason::missing_affect: return "missing_affect";
    }
    return "?";
}

AggregateResult aggregate(const std::vector<AggregateValue>& values,
                          bool weight_by_story) {
    AggregateResult out;
    std::map<std::string, std::pair<double, std::size_t>> per_story;
    double sum = 0.0;
    for (const auto& v : values) {
        if (v.exclusion) {
            out.exclusions[*v.exclusion]++;
            continue;
        }
        if (!v.value) continue;
        sum += *v.value;
        out.n_included++;
        auto& acc = per_story[v.story_id];
        acc.first += *v.value;
        acc.second++;
    }
    if (out.n_included == 0) {
        throw Error(ErrorCode::empty_group, "no included continuations in group");
    }
    if (weight_by_story) {
        double story_sum = 0.0;
        for (const auto& [id, acc] : per_story) {
            story_sum += acc.first / static_cast<double>(acc.second);
        }
        out.mean = story_sum / static_cast<double>(per_story.size());
    } else {
        out.mean = sum / static_cast<double>(out.n_included);
    }
    return out;
}

// --- config ---------------------------------------------------------------

namespace {

JumpMetric jump_metric_from_name(const std::string& name) {
    if (name == "l2") return JumpMetric::l2;
    if (name == "cosine") return JumpMetric::cosine;
    throw Error(ErrorCode::config_error, "unknown jump metric " + name);
}

const char* jump_metric_name(JumpMetric m) {
    return m == JumpMetric::l2 ? "l2" : "cosine";
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::config_error, "cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config_error, path + ": " + e.what());
    }
    RunConfig cfg;
    try {
        cfg.stories_path = j.value("stories", "");
        cfg.continuations_path = j.value("continuations", "");
        cfg.affect_path = j.value("affect", "");
        cfg.theme_embeddings_path = j.value("theme_embeddings", "");
        cfg.style_embeddings_path = j.value("style_embeddings", "");
        cfg.theme_metrics = j.value("theme_metrics", cfg.theme_metrics);
        cfg.affect_metrics = j.value("affect_metrics", cfg.affect_metrics);
        cfg.style_mmd = j.value("style_mmd", cfg.style_mmd);
        cfg.style_variance = j.value("style_variance", cfg.style_variance);
        cfg.fixed_k_control = j.value("fixed_k_control", cfg.fixed_k_control);
        cfg.manifold = j.value("manifold", cfg.manifold);
        cfg.endpoint_ranges = j.value("endpoint_ranges", cfg.endpoint_ranges);
        if (j.contains("lmm")) {
            for (const auto& jl : j["lmm"]) {
                LmmRequest req;
                req.response = jl.at("response").get<std::string>();
                req.model = jl.value("model", "human_vs_stage");
                req.length_covariate = jl.value("length_covariate", false);
                req.reml = jl.value("reml", false);
                cfg.lmm_requests.push_back(std::move(req));
            }
        }
        if (j.contains("jump_metric")) {
            cfg.jump_metric = jump_metric_from_name(j["jump_metric"].get<std::string>());
        }
        cfg.cv_sd_ddof = j.value("cv_sd_ddof", cfg.cv_sd_ddof);
        cfg.residualize_length = j.value("residualize_length", cfg.residualize_length);
        cfg.weight_by_story = j.value("weight_by_story", cfg.weight_by_story);
        cfg.bootstrap_replicates = j.value("bootstrap_replicates", cfg.bootstrap_replicates);
        cfg.mmd_bootstrap_replicates =
            j.value("mmd_bootstrap_replicates", cfg.mmd_bootstrap_replicates);
        cfg.mmd_subsample_cap = j.value("mmd_subsample_cap", cfg.mmd_subsample_cap);
        cfg.fixed_k.k = j.value("fixed_k", cfg.fixed_k.k);
        cfg.fixed_k.resamples = j.value("fixed_k_resamples", cfg.fixed_k.resamples);
        cfg.manifold_cfg.pca_dims = j.value("manifold_pca_dims", cfg.manifold_cfg.pca_dims);
        cfg.manifold_cfg.neighbor_k = j.value("manifold_neighbor_k", cfg.manifold_cfg.neighbor_k);
        cfg.manifold_cfg.radius_quantile =
            j.value("manifold_radius_quantile", cfg.manifold_cfg.radius_quantile);
        if (j.contains("stage_order")) {
            cfg.stage_order = j["stage_order"].get<std::vector<std::string>>();
        }
        cfg.endpoint_a = j.value("endpoint_a", cfg.endpoint_a);
        cfg.endpoint_b = j.value("endpoint_b", cfg.endpoint_b);
        cfg.ci_level = j.value("ci_level", cfg.ci_level);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config_error, path + ": " + e.what());
    }
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["stories"] = cfg.stories_path;
    j["continuations"] = cfg.continuations_path;
    j["affect"] = cfg.affect_path;
    j["theme_embeddings"] = cfg.theme_embeddings_path;
    j["style_embeddings"] = cfg.style_embeddings_path;
    j["theme_metrics"] = cfg.theme_metrics;
    j["affect_metrics"] = cfg.affect_metrics;
    j["style_mmd"] = cfg.style_mmd;
    j["style_variance"] = cfg.style_variance;
    j["fixed_k_control"] = cfg.fixed_k_control;
    j["manifold"] = cfg.manifold;
    j["endpoint_ranges"] = cfg.endpoint_ranges;
    j["lmm"] = nlohmann::json::array();
    for (const auto& req : cfg.lmm_requests) {
        j["lmm"].push_back({{"response", req.response},
                            {"model", req.model},
                            {"length_covariate", req.length_covariate},
                            {"reml", req.reml}});
    }
    j["jump_metric"] = jump_metric_name(cfg.jump_metric);
    j["cv_sd_ddof"] = cfg.cv_sd_ddof;
    j["residualize_length"] = cfg.residualize_length;
    j["weight_by_story"] = cfg.weight_by_story;
    j["bootstrap_replicates"] = cfg.bootstrap_replicates;
    j["mmd_bootstrap_replicates"] = cfg.mmd_bootstrap_replicates;
    j["mmd_subsample_cap"] = cfg.mmd_subsample_cap;
    j["fixed_k"] = cfg.fixed_k.k;
    j["fixed_k_resamples"] = cfg.fixed_k.resamples;
    j["manifold_pca_dims"] = cfg.manifold_cfg.pca_dims;
    j["manifold_neighbor_k"] = cfg.manifold_cfg.neighbor_k;
    j["manifold_radius_quantile"] = cfg.manifold_cfg.radius_quantile;
    j["stage_order"] = cfg.stage_order;
    j["endpoint_a"] = cfg.endpoint_a;
    j["endpoint_b"] = cfg.endpoint_b;
    j["ci_level"] = cfg.ci_level;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    return j.dump(2);
}

void apply_config_overrides(RunConfig& config, std::optional<std::uint64_t> seed,
                            const std::optional<std::string>& out_dir) {
    if (seed) config.seed = *seed;
    if (out_dir) config.output_dir = *out_dir;
}

// --- run ------------------------------------------------------------------

namespace {

struct ContMetrics {
    const ContinuationRecord* rec = nullptr;
    std::size_t n_sentences = 0;
    std::optional<double> theme_cv;
    std::optional<ExclusionReason> theme_exclusion;
    std::optional<PrevalenceProfile> main4;
    std::optional<PrevalenceProfile> robust7;
    std::optional<ExclusionReason> affect_exclusion;
    bool has_style = false;
};

struct GroupKey {
    std::string domain;
    std::string source;
    int cut = -1; // -1 pools all cuts

    auto operator<=>(const GroupKey&) const = default;
};

using GroupIndex = std::map<GroupKey, std::vector<std::size_t>>;

// Story-paired values for ratio/shift statistics within one domain.
struct StoryPair {
    std::vector<double> human;
    std::vector<double> model;
};

// Per-story centroid sums for the across-story variance bootstrap.
struct StoryVarCell {
    double sq_human = 0.0;
    Eigen::VectorXd vec_human;
    std::size_t n_human = 0;
    double sq_model = 0.0;
    Eigen::VectorXd vec_model;
    std::size_t n_model = 0;
};

double variance_from_sums(double sq, const Eigen::VectorXd& vec, std::size_t n) {
    if (n < 2) return -1.0;
    double dn = static_cast<double>(n);
    double var = (sq - vec.squaredNorm() / dn) / (dn - 1.0);
    return var < 0.0 ? 0.0 : var;
}

class Runner {
public:
    explicit Runner(const RunConfig& config) : cfg_(config) {}

    RunResult execute() {
        validate_config();
        load_inputs();
        compute_continuation_metrics();
        if (cfg_.residualize_length) residualize_theme();
        index_groups();
        build_cross_domain_table();
        build_stage_progression_table();
        build_cutpoint_table();
        if (cfg_.affect_metrics) build_affect_families_table();
        if (style_on() && cfg_.style_mmd) build_cross_domain_mmd_table();
        if (cfg_.endpoint_ranges) build_endpoint_ranges_table();
        if (!cfg_.lmm_requests.empty()) build_statistics_table();
        build_exclusions_table();
        return emit_all();
    }

private:
    bool style_on() const {
        return cfg_.style_mmd || cfg_.style_variance || cfg_.fixed_k_control ||
               cfg_.manifold;
    }

    void validate_config() {
        if (cfg_.stories_path.empty() || cfg_.continuations_path.empty()) {
            throw Error(ErrorCode::config_error,
                        "stories and continuations inputs are required");
        }
        if (cfg_.theme_metrics && cfg_.theme_embeddings_path.empty()) {
            throw Error(ErrorCode::config_error,
                        "theme metrics enabled but no theme_embeddings input");
        }
        if (cfg_.affect_metrics && cfg_.affect_path.empty()) {
            throw Error(ErrorCode::config_error,
                        "affect metrics enabled but no affect input");
        }
        if (style_on() && cfg_.style_embeddings_path.empty()) {
            throw Error(ErrorCode::config_error,
                        "style metrics enabled but no style_embeddings input");
        }
        const std::set<std::string> known_responses = {
            "theme_cv", "charge_main", "conflict", "surprise_curiosity",
            "neutral", "other"};
        const std::set<std::string> known_models = {
            "human_vs_stage", "generated_trend", "domain_compression"};
        for (const auto& req : cfg_.lmm_requests) {
            if (!known_responses.count(req.response)) {
                throw Error(ErrorCode::config_error,
                            "unknown lmm response " + req.response);
            }
            if (!known_models.count(req.model)) {
                throw Error(ErrorCode::config_error, "unknown lmm model " + req.model);
            }
            bool needs_theme = req.response == "theme_cv";
            if (needs_theme && !cfg_.theme_metrics) {
                throw Error(ErrorCode::config_error,
                            "lmm response theme_cv needs theme metrics enabled");
            }
            if (!needs_theme && !cfg_.affect_metrics) {
                throw Error(ErrorCode::config_error,
                            "lmm response " + req.response +
                                " needs affect metrics enabled");
            }
        }
        if (cfg_.output_dir.empty()) {
            throw Error(ErrorCode::config_error, "output_dir is required");
        }
        config_json_ = run_config_to_json(cfg_);
        provenance_.config_hash = fnv1a_hex(config_json_);
        provenance_.seed = cfg_.seed;
        provenance_.code_version = kCodeVersion;
    }

    void load_inputs() {
        dataset_ = load_dataset(cfg_.stories_path, cfg_.continuations_path);
        if (cfg_.theme_metrics) {
            theme_store_.emplace(load_embedding_file(cfg_.theme_embeddings_path));
        }
        if (style_on()) {
            style_store_.emplace(load_embedding_file(cfg_.style_embeddings_path));
        }
        if (cfg_.affect_metrics) {
            for (const auto& row : load_affect_file(cfg_.affect_path)) {
                affect_by_key_[row.key][row.sentence_index] = row.affect;
            }
        }
    }

    void compute_continuation_metrics() {
        const auto& conts = dataset_.continuations();
        metrics_.resize(conts.size());
        for (std::size_t i = 0; i < conts.size(); ++i) {
            const auto& cont = conts[i];
            auto& m = metrics_[i];
            m.rec = &cont;
            m.n_sentences = cont.sentences.size();
            if (cfg_.theme_metrics) compute_theme(m);
            if (cfg_.affect_metrics) compute_affect(m);
            if (style_on()) m.has_style = style_store_->contains(cont.key);
        }
    }

    void compute_theme(ContMetrics& m) {
        if (!theme_store_->contains(m.rec->key)) {
            m.theme_exclusion = ExclusionReason::missing_embedding;
            return;
        }
        Eigen::MatrixXd traj = theme_store_->vectors_for(m.rec->key);
        if (traj.rows() < 3) { // a CV needs at least 2 jumps
            m.theme_exclusion = ExclusionReason::too_few_sentences;
            return;
        }
        try {
            m.theme_cv = jump_cv(jump_series(traj, cfg_.jump_metric), cfg_.cv_sd_ddof);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::degenerate_trajectory) {
                m.theme_exclusion = ExclusionReason::degenerate_trajectory;
            } else {
                throw;
            }
        }
    }

    void compute_affect(ContMetrics& m) {
        auto it = affect_by_key_.find(m.rec->key);
        if (it == affect_by_key_.end() || it->second.size() != m.n_sentences) {
            m.affect_exclusion = ExclusionReason::missing_affect;
            return;
        }
        std::vector<AffectVector> affects;
        affects.reserve(it->second.size());
        for (const auto& [index, affect] : it->second) affects.push_back(affect);
        m.main4 = prevalence(affects, FamilyScheme::main4());
        m.robust7 = prevalence(affects, FamilyScheme::robust7());
    }

    // Linear length effects are removed within each domain, pooled over every
    // source being compared, keeping the original metric scale.
    void residualize_theme() {
        std::map<std::string, std::vector<std::size_t>> by_domain;
        for (std::size_t i = 0; i < metrics_.size(); ++i) {
            if (metrics_[i].theme_cv) by_domain[metrics_[i].rec->key.domain].push_back(i);
        }
        for (const auto& [domain, indices] : by_domain) {
            if (indices.size() < 3) continue;
            std::vector<double> values, lengths;
            values.reserve(indices.size());
            for (std::size_t i : indices) {
                values.push_back(*metrics_[i].theme_cv);
                lengths.push_back(static_cast<double>(metrics_[i].n_sentences));
            }
            bool constant = std::all_of(lengths.begin(), lengths.end(),
                                        [&](double l) { return l == lengths[0]; });
            if (constant) continue;
            ResidualizedMetric res = residualize(values, lengths);
            for (std::size_t k = 0; k < indices.size(); ++k) {
                metrics_[indices[k]].theme_cv = res.residualized[k];
            }
        }
    }

    void index_groups() {
        for (std::size_t i = 0; i < metrics_.size(); ++i) {
            const auto& key = metrics_[i].rec->key;
            pooled_[{key.domain, key.source, -1}].push_back(i);
            by_cut_[{key.domain, key.source, key.cut_percent}].push_back(i);
            domains_.insert(key.domain);
            sources_.insert(key.source);
        }
    }

    // Sources ordered Human first, then the configured stage order, then any
    // leftovers alphabetically.
    std::vector<std::string> ordered_sources() const {
        std::vector<std::string> out;
        if (sources_.count(kHumanSource)) out.push_back(kHumanSource);
        for (const auto& stage : cfg_.stage_order) {
            if (sources_.count(stage) && stage != kHumanSource) out.push_back(stage);
        }
        for (const auto& s : sources_) {
            if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
        }
        return out;
    }

    std::uint64_t metric_seed(const std::string& tag) const {
        return mix_seed(cfg_.seed, fnv1a_64(tag));
    }

    struct GroupEstimate {
        AggregateResult agg;
        std::optional<MetricEstimate> estimate;
    };

    // Mean + story-bootstrap CI over a group's included continuation values.
    // The aggregate (with its exclusion counts) comes back even when the
    // whole group is excluded; the estimate is absent in that case.
    GroupEstimate group_estimate(
        const std::vector<std::size_t>& indices,
        const std::function<std::optional<double>(const ContMetrics&)>& value_of,
        const std::function<std::optional<ExclusionReason>(const ContMetrics&)>& exclusion_of,
        const std::string& seed_tag) {
        std::vector<AggregateValue> values;
        std::map<std::string, std::vector<double>> by_story;
        for (std::size_t i : indices) {
            const auto& m = metrics_[i];
            AggregateValue v;
            v.story_id = m.rec->key.story_id;
            v.value = value_of(m);
            if (!v.value) v.exclusion = exclusion_of(m);
            values.push_back(v);
            if (v.value) by_story[v.story_id].push_back(*v.value);
        }
        GroupEstimate out;
        try {
            out.agg = aggregate(values, cfg_.weight_by_story);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::empty_group) {
                for (const auto& v : values) {
                    if (v.exclusion) out.agg.exclusions[*v.exclusion]++;
                }
                return out;
            }
            throw;
        }
        std::vector<std::vector<double>> story_values;
        story_values.reserve(by_story.size());
        for (auto& [id, vals] : by_story) story_values.push_back(std::move(vals));
        const bool by_story_weighting = cfg_.weight_by_story;
        auto statistic = [by_story_weighting](
                             const std::vector<const std::vector<double>*>& stories) {
            double sum = 0.0;
            std::size_t count = 0;
            if (by_story_weighting) {
                for (const auto* s : stories) {
                    if (s->empty()) continue;
                    double story_sum = 0.0;
                    for (double v : *s) story_sum += v;
                    sum += story_sum / static_cast<double>(s->size());
                    ++count;
                }
            } else {
                for (const auto* s : stories) {
                    for (double v : *s) {
                        sum += v;
                        ++count;
                    }
                }
            }
            return count == 0 ? 0.0 : sum / static_cast<double>(count);
        };
        MetricEstimate est =
            story_bootstrap_ci(story_values, statistic, cfg_.bootstrap_replicates,
                               metric_seed(seed_tag), cfg_.ci_level);
        est.value = out.agg.mean; // aggregate() is the authoritative point estimate
        out.estimate = est;
        return out;
    }

    // Per-(metric, group) accounting: total = included + every counted
    // exclusion, so nothing drops silently.
    struct ExclusionAccount {
        std::size_t total = 0;
        std::size_t included = 0;
        std::map<ExclusionReason, std::size_t> reasons;
    };

    void record_account(const std::string& tag, std::size_t total,
                        const AggregateResult& agg) {
        auto& account = accounts_[tag];
        account.total += total;
        account.included += agg.n_included;
        for (const auto& [reason, count] : agg.exclusions) {
            account.reasons[reason] += count;
        }
    }

    // Story-paired ratio or difference of group means (model vs human).
    std::optional<MetricEstimate> paired_estimate(
        const std::string& domain, const std::string& source,
        const std::function<std::optional<double>(const ContMetrics&)>& value_of,
        bool ratio, const std::string& seed_tag) {
        auto model_it = pooled_.find({domain, source, -1});
        auto human_it = pooled_.find({domain, kHumanSource, -1});
        if (model_it == pooled_.end() || human_it == pooled_.end()) return std::nullopt;
        std::map<std::string, StoryPair> by_story;
        for (std::size_t i : human_it->second) {
            if (auto v = value_of(metrics_[i])) {
                by_story[metrics_[i].rec->key.story_id].human.push_back(*v);
            }
        }
        for (std::size_t i : model_it->second) {
            if (auto v = value_of(metrics_[i])) {
                by_story[metrics_[i].rec->key.story_id].model.push_back(*v);
            }
        }
        std::vector<StoryPair> pairs;
        pairs.reserve(by_story.size());
        for (auto& [id, p] : by_story) pairs.push_back(std::move(p));
        if (pairs.empty()) return std::nullopt;
        auto statistic = [ratio](const std::vector<const StoryPair*>& stories) {
            double sum_h = 0.0, sum_m = 0.0;
            std::size_t n_h = 0, n_m = 0;
            for (const auto* s : stories) {
                for (double v : s->human) { sum_h += v; ++n_h; }
                for (double v : s->model) { sum_m += v; ++n_m; }
            }
            if (n_h == 0 || n_m == 0) return ratio ? 1.0 : 0.0;
            double mean_h = sum_h / static_cast<double>(n_h);
            double mean_m = sum_m / static_cast<double>(n_m);
            if (ratio) return mean_h == 0.0 ? 0.0 : mean_m / mean_h;
            return mean_m - mean_h;
        };
        MetricEstimate est = bootstrap_ci<StoryPair>(
            pairs, statistic, cfg_.bootstrap_replicates, metric_seed(seed_tag),
            cfg_.ci_level, CiMethod::story_bootstrap);
        return est;
    }

    // Pooled sentence style vectors of one group.
    std::optional<Eigen::MatrixXd> style_matrix(const GroupKey& key) const {
        auto it = pooled_.find(key);
        if (it == pooled_.end()) return std::nullopt;
        std::vector<Eigen::MatrixXd> blocks;
        Eigen::Index total = 0;
        for (std::size_t i : it->second) {
            if (!metrics_[i].has_style) continue;
            blocks.push_back(style_store_->vectors_for(metrics_[i].rec->key));
            total += blocks.back().rows();
        }
        if (blocks.empty()) return std::nullopt;
        Eigen::MatrixXd out(total, style_store_->dim());
        Eigen::Index row = 0;
        for (const auto& b : blocks) {
            out.middleRows(row, b.rows()) = b;
            row += b.rows();
        }
        return out;
    }

    std::optional<Mmd2Result> mmd_for(const std::string& domain,
                                      const std::string& source) {
        auto human = style_matrix({domain, kHumanSource, -1});
        auto model = style_matrix({domain, source, -1});
        if (!human || !model || human->rows() < 2 || model->rows() < 2) {
            return std::nullopt;
        }
        KernelConfig kc;
        kc.subsample_cap = cfg_.mmd_subsample_cap;
        kc.seed = metric_seed("mmd|" + domain + "|" + source);
        return mmd2_with_ci(*human, *model, kc, cfg_.mmd_bootstrap_replicates,
                            metric_seed("mmd_boot|" + domain + "|" + source),
                            cfg_.ci_level);
    }

    // Across-story variance ratio (model / matched human), story bootstrap.
    std::optional<MetricEstimate> var_ratio_for(const std::string& domain,
                                                const std::string& source) {
        auto model_it = pooled_.find({domain, source, -1});
        auto human_it = pooled_.find({domain, kHumanSource, -1});
        if (model_it == pooled_.end() || human_it == pooled_.end()) return std::nullopt;
        std::map<std::string, StoryVarCell> cells;
        const Eigen::Index dim = style_store_->dim();
        auto accumulate = [&](const std::vector<std::size_t>& indices, bool is_human) {
            for (std::size_t i : indices) {
                if (!metrics_[i].has_style) continue;
                Eigen::MatrixXd vectors = style_store_->vectors_for(metrics_[i].rec->key);
                Eigen::VectorXd centroid = vectors.colwise().mean().transpose();
                auto& cell = cells[metrics_[i].rec->key.story_id];
                if (cell.vec_human.size() == 0) {
                    cell.vec_human = Eigen::VectorXd::Zero(dim);
                    cell.vec_model = Eigen::VectorXd::Zero(dim);
                }
                if (is_human) {
                    cell.sq_human += centroid.squaredNorm();
                    cell.vec_human += centroid;
                    cell.n_human++;
                } else {
                    cell.sq_model += centroid.squaredNorm();
                    cell.vec_model += centroid;
                    cell.n_model++;
                }
            }
        };
        accumulate(human_it->second, true);
        accumulate(model_it->second, false);
        std::vector<StoryVarCell> units;
        units.reserve(cells.size());
        for (auto& [id, cell] : cells) units.push_back(std::move(cell));
        if (units.empty()) return std::nullopt;
        auto statistic = [dim](const std::vector<const StoryVarCell*>& stories) {
            double sq_h = 0.0, sq_m = 0.0;
            Eigen::VectorXd vec_h = Eigen::VectorXd::Zero(dim);
            Eigen::VectorXd vec_m = Eigen::VectorXd::Zero(dim);
            std::size_t n_h = 0, n_m = 0;
            for (const auto* s : stories) {
                sq_h += s->sq_human;
                vec_h += s->vec_human;
                n_h += s->n_human;
                sq_m += s->sq_model;
                vec_m += s->vec_model;
                n_m += s->n_model;
            }
            double var_h = variance_from_sums(sq_h, vec_h, n_h);
            double var_m = variance_from_sums(sq_m, vec_m, n_m);
            if (var_h <= 0.0 || var_m < 0.0) return 1.0; // degenerate replicate
            return var_m / var_h;
        };
        MetricEstimate est = bootstrap_ci<StoryVarCell>(
            units, statistic, cfg_.bootstrap_replicates,
            metric_seed("var|" + domain + "|" + source), cfg_.ci_level,
            CiMethod::story_bootstrap);
        return est;
    }

    std::optional<double> fixed_k_ratio_for(const std::string& domain,
                                            const std::string& source) {
        auto sentences_of = [&](const GroupKey& key)
            -> std::optional<std::vector<Eigen::MatrixXd>> {
            auto it = pooled_.find(key);
            if (it == pooled_.end()) return std::nullopt;
            std::vector<Eigen::MatrixXd> out;
            for (std::size_t i : it->second) {
                if (!metrics_[i].has_style) continue;
                out.push_back(style_store_->vectors_for(metrics_[i].rec->key));
            }
            if (out.size() < 2) return std::nullopt;
            return out;
        };
        auto human = sentences_of({domain, kHumanSource, -1});
        auto model = sentences_of({domain, source, -1});
        if (!human || !model) return std::nullopt;
        FixedKConfig fk = cfg_.fixed_k;
        fk.seed = metric_seed("fixedk|" + domain + "|" + source);
        double vm = fixed_k_variance(*model, fk);
        fk.seed = metric_seed("fixedk|" + domain + "|" + kHumanSource);
        double vh = fixed_k_variance(*human, fk);
        if (vh <= 0.0) return std::nullopt;
        return vm / vh;
    }

    std::optional<double> charge_of(const ContMetrics& m, ChargeVariant v) const {
        if (!m.main4) return std::nullopt;
        return affective_charge(*m.main4, v);
    }

    // --- tables -----------------------------------------------------------

    void add_estimate_cell(std::vector<TableCell>& row,
                           const std::optional<MetricEstimate>& est) {
        if (est) row.emplace_back(*est);
        else row.emplace_back(std::monostate{});
    }

    // Affective charge = surprise_curiosity + conflict; its interval is the
    // conservative component-bound sum of the two family intervals.
    std::optional<MetricEstimate> charge_estimate(const std::vector<std::size_t>& indices,
                                                  const std::string& seed_tag) {
        auto sc = group_estimate(
            indices,
            [](const ContMetrics& m) -> std::optional<double> {
                if (!m.main4) return std::nullopt;
                return m.main4->share("surprise_curiosity");
            },
            [](const ContMetrics& m) { return m.affect_exclusion; },
            seed_tag + "|sc");
        auto conflict = group_estimate(
            indices,
            [](const ContMetrics& m) -> std::optional<double> {
                if (!m.main4) return std::nullopt;
                return m.main4->share("conflict");
            },
            [](const ContMetrics& m) { return m.affect_exclusion; },
            seed_tag + "|conflict");
        if (!sc.estimate || !conflict.estimate) return std::nullopt;
        if (sc.estimate->method == CiMethod::point_only ||
            conflict.estimate->method == CiMethod::point_only) {
            MetricEstimate est = *sc.estimate;
            est.value += conflict.estimate->value;
            est.ci_low = est.ci_high = est.value;
            return est;
        }
        return component_bound_ci(*sc.estimate, *conflict.estimate);
    }

    void build_cross_domain_table() {
        ReportTable table;
        table.id = "cross_domain";
        table.provenance = provenance_;
        table.columns = {
            {"domain", ColumnKind::text},
            {"source", ColumnKind::text},
            {"n", ColumnKind::number},
            {"theme_cv", ColumnKind::estimate},
            {"affective_charge", ColumnKind::estimate, true},
            {"conflict", ColumnKind::estimate, true},
            {"surprise_curiosity", ColumnKind::estimate, true},
            {"neutral", ColumnKind::estimate, true},
            {"style_mmd2", ColumnKind::estimate},
        };
        for (const auto& domain : domains_) {
            for (const auto& source : ordered_sources()) {
                GroupKey key{domain, source, -1};
                auto it = pooled_.find(key);
                if (it == pooled_.end()) continue;
                std::vector<TableCell> row;
                row.emplace_back(domain);
                row.emplace_back(source);
                row.emplace_back(static_cast<double>(it->second.size()));
                std::string tag = domain + "|" + source;
                if (cfg_.theme_metrics) {
                    auto est = group_estimate(
                        it->second,
                        [](const ContMetrics& m) { return m.theme_cv; },
                        [](const ContMetrics& m) { return m.theme_exclusion; },
                        "theme_cv|" + tag);
                    record_account("theme_cv|" + tag, it->second.size(), est.agg);
                    add_estimate_cell(row, est.estimate);
                } else {
                    row.emplace_back(std::monostate{});
                }
                if (cfg_.affect_metrics) {
                    add_estimate_cell(row, charge_estimate(it->second, "charge|" + tag));
                    bool first_family = true;
                    for (const char* family :
                         {"conflict", "surprise_curiosity", "neutral"}) {
                        std::string f = family;
                        auto est = group_estimate(
                            it->second,
                            [f](const ContMetrics& m) -> std::optional<double> {
                                if (!m.main4) return std::nullopt;
                                return m.main4->share(f);
                            },
                            [](const ContMetrics& m) { return m.affect_exclusion; },
                            f + "|" + tag);
                        if (first_family) {
                            record_account("affect|" + tag, it->second.size(), est.agg);
                            first_family = false;
                        }
                        add_estimate_cell(row, est.estimate);
                    }
                } else {
                    for (int k = 0; k < 4; ++k) row.emplace_back(std::monostate{});
                }
                if (cfg_.style_mmd && source != kHumanSource) {
                    auto mmd = mmd_for(domain, source);
                    if (mmd) {
                        MetricEstimate est;
                        est.value = mmd->value;
                        est.ci_low = mmd->ci_low;
                        est.ci_high = mmd->ci_high;
                        est.n_units = mmd->n_a + mmd->n_b;
                        est.method = cfg_.mmd_bootstrap_replicates > 0
                                         ? CiMethod::sentence_bootstrap
                                         : CiMethod::point_only;
                        row.emplace_back(est);
                    } else {
                        row.emplace_back(std::monostate{});
                    }
                } else {
                    row.emplace_back(std::monostate{});
                }
                table.rows.push_back(std::move(row));
            }
        }
        tables_.push_back(std::move(table));
    }

    void build_stage_progression_table() {
        ReportTable table;
        table.id = "stage_progression";
        table.provenance = provenance_;
        table.columns = {
            {"domain", ColumnKind::text},
            {"source", ColumnKind::text},
            {"theme_cv", ColumnKind::estimate},
            {"theme_cv_rel", ColumnKind::estimate},
            {"neutral_shift", ColumnKind::estimate, true},
            {"style_mmd2", ColumnKind::estimate},
            {"style_var_rel", ColumnKind::estimate},
            {"fixed_k_var_rel", ColumnKind::number},
            {"manifold_precision", ColumnKind::number},
        };
        for (const auto& domain : domains_) {
            for (const auto& source : ordered_sources()) {
                GroupKey key{domain, source, -1};
                auto it = pooled_.find(key);
                if (it == pooled_.end()) continue;
                std::vector<TableCell> row;
                row.emplace_back(domain);
                row.emplace_back(source);
                std::string tag = domain + "|" + source;
                if (cfg_.theme_metrics) {
                    auto est = group_estimate(
                        it->second, [](const ContMetrics& m) { return m.theme_cv; },
                        [](const ContMetrics& m) { return m.theme_exclusion; },
                        "theme_cv|" + tag);
                    add_estimate_cell(row, est.estimate);
                } else {
                    row.emplace_back(std::monostate{});
                }
                const bool is_human = source == kHumanSource;
                if (cfg_.theme_metrics && !is_human) {
                    add_estimate_cell(
                        row, paired_estimate(
                                 domain, source,
                                 [](const ContMetrics& m) { return m.theme_cv; },
                                 /*ratio=*/true, "cv_rel|" + tag));
                } else {
                    row.emplace_back(std::monostate{});
                }
                if (cfg_.affect_metrics && !is_human) {
                    add_estimate_cell(
                        row, paired_estimate(
                                 domain, source,
                                 [](const ContMetrics& m) -> std::optional<double> {
                                     if (!m.main4) return std::nullopt;
                                     return m.main4->share("neutral");
                                 },
                                 /*ratio=*/false, "neutral_shift|" + tag));
                } else {
                    row.emplace_back(std::monostate{});
                }
                if (cfg_.style_mmd && !is_human) {
                    auto mmd = mmd_for(domain, source);
                    if (mmd) {
                        MetricEstimate est;
                        est.value = mmd->value;
                        est.ci_low = mmd->ci_low;
                        est.ci_high = mmd->ci_high;
                        est.n_units = mmd->n_a + mmd->n_b;
                        est.method = cfg_.mmd_bootstrap_replicates > 0
                                         ? CiMethod::sentence_bootstrap
                                         : CiMethod::point_only;
                        row.emplace_back(est);
                    } else {
                        row.emplace_back(std::monostate{});
                    }
                } else {
                    row.emplace_back(std::monostate{});
                }
                if (cfg_.style_variance) {
                    if (is_human) {
                        MetricEstimate one;
                        one.value = one.ci_low = one.ci_high = 1.0;
                        one.method = CiMethod::point_only;
                        row.emplace_back(one);
                    } else {
                        add_estimate_cell(row, var_ratio_for(domain, source));
                    }
                } else {
                    row.emplace_back(std::monostate{});
                }
                if (cfg_.fixed_k_control) {
                    auto ratio = is_human ? std::optional<double>(1.0)
                                          : fixed_k_ratio_for(domain, source);
                    if (ratio) row.emplace_back(*ratio);
                    else row.emplace_back(std::monostate{});
                } else {
                    row.emplace_back(std::monostate{});
                }
                if (cfg_.manifold && !is_human) {
                    auto human = style_matrix({domain, kHumanSource, -1});
                    auto model = style_matrix({domain, source, -1});
                    if (human && model &&
                        human->rows() > cfg_.manifold_cfg.neighbor_k) {
                        row.emplace_back(
                            manifold_precision(*human, *model, cfg_.manifold_cfg)
                                .precision);
                    } else {
                        row.emplace_back(std::monostate{});
                    }
                } else {
                    row.emplace_back(std::monostate{});
                }
                table.rows.push_back(std::move(row));
            }
        }
        tables_.push_back(std::move(table));
    }

    void build_cutpoint_table() {
        ReportTable table;
        table.id = "cutpoint_robustness";
        table.provenance = provenance_;
        table.columns = {
            {"domain", ColumnKind::text},
            {"cut", ColumnKind::number},
            {"source", ColumnKind::text},
            {"n", ColumnKind::number},
            {"theme_cv", ColumnKind::estimate},
            {"affective_charge", ColumnKind::estimate, true},
            {"neutral", ColumnKind::estimate, true},
        };
        for (const auto& [key, indices] : by_cut_) {
            std::vector<TableCell> row;
            row.emplace_back(key.domain);
            row.emplace_back(static_cast<double>(key.cut));
            row.emplace_back(key.source);
            row.emplace_back(static_cast<double>(indices.size()));
            std::string tag =
                key.domain + "|" + key.source + "|" + std::to_string(key.cut);
            if (cfg_.theme_metrics) {
                auto est = group_estimate(
                    indices, [](const ContMetrics& m) { return m.theme_cv; },
                    [](const ContMetrics& m) { return m.theme_exclusion; },
                    "theme_cv|" + tag);
                add_estimate_cell(row, est.estimate);
            } else {
                row.emplace_back(std::monostate{});
            }
            if (cfg_.affect_metrics) {
                add_estimate_cell(row, charge_estimate(indices, "charge|" + tag));
                auto est = group_estimate(
                    indices,
                    [](const ContMetrics& m) -> std::optional<double> {
                        if (!m.main4) return std::nullopt;
                        return m.main4->share("neutral");
                    },
                    [](const ContMetrics& m) { return m.affect_exclusion; },
                    "neutral|" + tag);
                add_estimate_cell(row, est.estimate);
            } else {
                row.emplace_back(std::monostate{});
                row.emplace_back(std::monostate{});
            }
            table.rows.push_back(std::move(row));
        }
        tables_.push_back(std::move(table));
    }

    void build_affect_families_table() {
        ReportTable table;
        table.id = "affect_families";
        table.provenance = provenance_;
        table.columns = {{"domain", ColumnKind::text}, {"source", ColumnKind::text}};
        for (const auto& family : FamilyScheme::robust7().families) {
            table.columns.push_back({family, ColumnKind::estimate, true});
        }
        table.columns.push_back({"charge_main", ColumnKind::number, true});
        table.columns.push_back({"charge_threat_inclusive", ColumnKind::number, true});
        table.columns.push_back({"charge_expanded", ColumnKind::number, true});
        for (const auto& domain : domains_) {
            for (const auto& source : ordered_sources()) {
                GroupKey key{domain, source, -1};
                auto it = pooled_.find(key);
                if (it == pooled_.end()) continue;
                std::vector<TableCell> row;
                row.emplace_back(domain);
                row.emplace_back(source);
                std::string tag = domain + "|" + source;
                for (const auto& family : FamilyScheme::robust7().families) {
                    auto est = group_estimate(
                        it->second,
                        [family](const ContMetrics& m) -> std::optional<double> {
                            if (!m.robust7) return std::nullopt;
                            return m.robust7->share(family);
                        },
                        [](const ContMetrics& m) { return m.affect_exclusion; },
                        "r7|" + family + "|" + tag);
                    add_estimate_cell(row, est.estimate);
                }
                for (ChargeVariant v : {ChargeVariant::main, ChargeVariant::threat_inclusive,
                                        ChargeVariant::expanded}) {
                    std::vector<AggregateValue> values;
                    for (std::size_t i : it->second) {
                        AggregateValue av;
                        av.story_id = metrics_[i].rec->key.story_id;
                        av.value = charge_of(metrics_[i], v);
                        if (!av.value) av.exclusion = metrics_[i].affect_exclusion;
                        values.push_back(std::move(av));
                    }
                    try {
                        row.emplace_back(aggregate(values, cfg_.weight_by_story).mean);
                    } catch (const Error&) {
                        row.emplace_back(std::monostate{});
                    }
                }
                table.rows.push_back(std::move(row));
            }
        }
        tables_.push_back(std::move(table));
    }

    void build_cross_domain_mmd_table() {
        ReportTable table;
        table.id = "cross_domain_mmd";
        table.provenance = provenance_;
        table.columns = {
            {"source", ColumnKind::text},
            {"domain_a", ColumnKind::text},
            {"domain_b", ColumnKind::text},
            {"style_mmd2", ColumnKind::number},
        };
        std::vector<std::string> domain_list(domains_.begin(), domains_.end());
        for (const auto& source : ordered_sources()) {
            for (std::size_t a = 0; a < domain_list.size(); ++a) {
                for (std::size_t b = a + 1; b < domain_list.size(); ++b) {
                    auto ma = style_matrix({domain_list[a], source, -1});
                    auto mb = style_matrix({domain_list[b], source, -1});
                    if (!ma || !mb || ma->rows() < 2 || mb->rows() < 2) continue;
                    KernelConfig kc;
                    kc.subsample_cap = cfg_.mmd_subsample_cap;
                    kc.seed = metric_seed("xmmd|" + source + "|" + domain_list[a] +
                                          "|" + domain_list[b]);
                    std::vector<TableCell> row;
                    row.emplace_back(source);
                    row.emplace_back(domain_list[a]);
                    row.emplace_back(domain_list[b]);
                    row.emplace_back(mmd2_unbiased(*ma, *mb, kc));
                    table.rows.push_back(std::move(row));
                }
            }
        }
        tables_.push_back(std::move(table));
    }

    std::string resolve_endpoint_b() const {
        if (!cfg_.endpoint_b.empty()) return cfg_.endpoint_b;
        std::string last;
        for (const auto& stage : cfg_.stage_order) {
            if (sources_.count(stage)) last = stage;
        }
        return last;
    }

    void build_endpoint_ranges_table() {
        std::string endpoint_b = resolve_endpoint_b();
        if (endpoint_b.empty() || domains_.size() < 2) return;
        ReportTable table;
        table.id = "endpoint_ranges";
        table.provenance = provenance_;
        table.columns = {
            {"metric", ColumnKind::text},
            {"endpoint_a", ColumnKind::text},
            {"endpoint_b", ColumnKind::text},
            {"range_a", ColumnKind::estimate},
            {"range_b", ColumnKind::estimate},
            {"reduction_pct", ColumnKind::number},
        };
        struct RangeMetric {
            std::string name;
            std::function<std::optional<double>(const ContMetrics&)> value_of;
            bool enabled;
        };
        std::vector<RangeMetric> range_metrics;
        range_metrics.push_back(
            {"theme_cv", [](const ContMetrics& m) { return m.theme_cv; },
             cfg_.theme_metrics});
        range_metrics.push_back(
            {"affective_charge",
             [this](const ContMetrics& m) { return charge_of(m, ChargeVariant::main); },
             cfg_.affect_metrics});
        for (const auto& metric : range_metrics) {
            if (!metric.enabled) continue;
            auto cells_for = [&](const std::string& source)
                -> std::vector<DomainCell> {
                std::vector<DomainCell> cells;
                for (const auto& domain : domains_) {
                    auto it = pooled_.find({domain, source, -1});
                    if (it == pooled_.end()) continue;
                    std::map<std::string, std::vector<double>> by_story;
                    for (std::size_t i : it->second) {
                        if (auto v = metric.value_of(metrics_[i])) {
                            by_story[metrics_[i].rec->key.story_id].push_back(*v);
                        }
                    }
                    if (by_story.empty()) continue;
                    DomainCell cell;
                    cell.domain = domain;
                    for (auto& [id, vals] : by_story) {
                        cell.story_values.push_back(std::move(vals));
                    }
                    cells.push_back(std::move(cell));
                }
                return cells;
            };
            auto cells_a = cells_for(cfg_.endpoint_a);
            auto cells_b = cells_for(endpoint_b);
            if (cells_a.size() < 2 || cells_b.size() < 2) continue;
            RangeReduction rr =
                range_reduction(cells_a, cells_b, cfg_.bootstrap_replicates,
                                metric_seed("range|" + metric.name), cfg_.ci_level);
            std::vector<TableCell> row;
            row.emplace_back(metric.name);
            row.emplace_back(cfg_.endpoint_a);
            row.emplace_back(endpoint_b);
            row.emplace_back(rr.range_a);
            row.emplace_back(rr.range_b);
            row.emplace_back(rr.reduction * 100.0);
            table.rows.push_back(std::move(row));
        }
        if (!table.rows.empty()) tables_.push_back(std::move(table));
    }

    std::function<std::optional<double>(const ContMetrics&)> response_getter(
        const std::string& response) const {
        if (response == "theme_cv") {
            return [](const ContMetrics& m) { return m.theme_cv; };
        }
        if (response == "charge_main") {
            return [this](const ContMetrics& m) {
                return charge_of(m, ChargeVariant::main);
            };
        }
        std::string family = response;
        return [family](const ContMetrics& m) -> std::optional<double> {
            if (!m.main4) return std::nullopt;
            if (!m.main4->family_shares.count(family)) return std::nullopt;
            return m.main4->share(family);
        };
    }

    void build_statistics_table() {
        ReportTable table;
        table.id = "statistics";
        table.provenance = provenance_;
        table.columns = {
            {"response", ColumnKind::text},
            {"model", ColumnKind::text},
            {"contrast", ColumnKind::text},
            {"estimate", ColumnKind::number},
            {"std_error", ColumnKind::number},
            {"ci_low", ColumnKind::number},
            {"ci_high", ColumnKind::number},
            {"p", ColumnKind::p_value},
            {"p_holm", ColumnKind::p_value},
            {"var_story", ColumnKind::number},
            {"var_residual", ColumnKind::number},
            {"lambda", ColumnKind::number},
            {"boundary_fit", ColumnKind::text},
            {"n_obs", ColumnKind::number},
            {"n_stories", ColumnKind::number},
        };
        for (const auto& req : cfg_.lmm_requests) {
            auto getter = response_getter(req.response);
            std::vector<LmmObservation> observations;
            auto stage_index = [&](const std::string& source) -> std::optional<int> {
                for (std::size_t s = 0; s < cfg_.stage_order.size(); ++s) {
                    if (cfg_.stage_order[s] == source) return static_cast<int>(s);
                }
                return std::nullopt;
            };
            for (const auto& m : metrics_) {
                auto value = getter(m);
                if (!value) continue;
                const auto& key = m.rec->key;
                if (req.model == "generated_trend" && key.source == kHumanSource) continue;
                LmmObservation obs;
                obs.group = key.domain + "/" + key.story_id;
                obs.response = *value;
                obs.factors["stage"] = key.source;
                obs.factors["cut"] = std::to_string(key.cut_percent);
                obs.factors["domain"] = key.domain;
                obs.factors["sample"] = std::to_string(key.sample_id);
                if (req.model == "generated_trend") {
                    auto order = stage_index(key.source);
                    if (!order) continue;
                    obs.covariates["stage_order"] = static_cast<double>(*order);
                }
                obs.covariates["log_len"] =
                    std::log1p(static_cast<double>(m.n_sentences));
                observations.push_back(std::move(obs));
            }
            if (observations.size() < 3) continue;

            LmmSpec spec;
            spec.response = req.response;
            spec.reml = req.reml;
            spec.reference_levels["stage"] = kHumanSource;
            bool multiple_cuts = dataset_.cuts().size() > 1;
            if (req.model == "generated_trend") {
                spec.fixed.push_back(LmmTerm::covariate("stage_order"));
                if (multiple_cuts) spec.fixed.push_back(LmmTerm::factor("cut"));
                spec.fixed.push_back(LmmTerm::factor("sample"));
            } else if (req.model == "domain_compression") {
                spec.fixed.push_back(LmmTerm::factor("stage"));
                spec.fixed.push_back(LmmTerm::factor("domain"));
                spec.fixed.push_back(LmmTerm::interaction("stage", "domain"));
                if (multiple_cuts) spec.fixed.push_back(LmmTerm::factor("cut"));
            } else {
                spec.fixed.push_back(LmmTerm::factor("stage"));
                if (multiple_cuts) spec.fixed.push_back(LmmTerm::factor("cut"));
            }
            if (req.length_covariate) spec.fixed.push_back(LmmTerm::covariate("log_len"));

            // Drop single-level factors (e.g. one sample id) to keep the
            // design full rank.
            std::erase_if(spec.fixed, [&](const LmmTerm& term) {
                if (term.kind != LmmTerm::Kind::factor) return false;
                std::set<std::string> levels;
                for (const auto& obs : observations) {
                    levels.insert(obs.factors.at(term.name));
                }
                return levels.size() < 2;
            });

            LmmFit fit;
            try {
                fit = lmm_fit(spec, observations);
            } catch (const Error&) {
                continue; // partial-failure policy: skip this request
            }
            std::vector<std::size_t> contrast_rows;
            std::vector<double> contrast_ps;
            for (const auto& effect : fit.effects) {
                bool is_contrast =
                    effect.name.rfind("stage", 0) == 0 || effect.name == "stage_order";
                std::vector<TableCell> row;
                row.emplace_back(req.response);
                row.emplace_back(req.model + (req.length_covariate ? "+log_len" : ""));
                row.emplace_back(effect.name);
                row.emplace_back(effect.estimate);
                row.emplace_back(effect.std_error);
                row.emplace_back(effect.ci_low);
                row.emplace_back(effect.ci_high);
                row.emplace_back(PValueCell{effect.p_value});
                row.emplace_back(std::monostate{}); // p_holm filled below
                row.emplace_back(fit.var_group);
                row.emplace_back(fit.var_residual);
                row.emplace_back(fit.lambda);
                row.emplace_back(std::string(fit.boundary_fit ? "yes" : "no"));
                row.emplace_back(static_cast<double>(fit.n_obs));
                row.emplace_back(static_cast<double>(fit.n_groups));
                if (is_contrast) {
                    contrast_rows.push_back(table.rows.size());
                    contrast_ps.push_back(effect.p_value);
                }
                table.rows.push_back(std::move(row));
            }
            if (!contrast_ps.empty()) {
                HolmResult holm = holm_bonferroni(contrast_ps);
                for (std::size_t i = 0; i < contrast_rows.size(); ++i) {
                    table.rows[contrast_rows[i]][8] = PValueCell{holm.adjusted[i]};
                }
            }
        }
        if (!table.rows.empty()) tables_.push_back(std::move(table));
    }

    void build_exclusions_table() {
        ReportTable table;
        table.id = "exclusions";
        table.provenance = provenance_;
        table.columns = {
            {"metric_group", ColumnKind::text},
            {"n_total", ColumnKind::number},
            {"n_included", ColumnKind::number},
            {"reason", ColumnKind::text},
            {"n_excluded", ColumnKind::number},
        };
        for (const auto& [tag, account] : accounts_) {
            if (account.reasons.empty()) {
                std::vector<TableCell> row;
                row.emplace_back(tag);
                row.emplace_back(static_cast<double>(account.total));
                row.emplace_back(static_cast<double>(account.included));
                row.emplace_back(std::string("none"));
                row.emplace_back(0.0);
                table.rows.push_back(std::move(row));
                continue;
            }
            for (const auto& [reason, count] : account.reasons) {
                std::vector<TableCell> row;
                row.emplace_back(tag);
                row.emplace_back(static_cast<double>(account.total));
                row.emplace_back(static_cast<double>(account.included));
                row.emplace_back(std::string(exclusion_reason_name(reason)));
                row.emplace_back(static_cast<double>(count));
                table.rows.push_back(std::move(row));
            }
        }
        tables_.push_back(std::move(table));
    }

    RunResult emit_all() {
        RunResult result;
        result.written_files = emit_tables(tables_, cfg_.output_dir);
        result.tables = tables_;

        nlohmann::json manifest;
        manifest["config_hash"] = provenance_.config_hash;
        manifest["seed"] = cfg_.seed;
        manifest["code_version"] = kCodeVersion;
        manifest["config"] = nlohmann::json::parse(config_json_);
        manifest["decisions"] = {
            {"cut_rule", "floor(c*T) clamped to [1, T-1]"},
            {"cv_sd_ddof", cfg_.cv_sd_ddof},
            {"jump_metric", jump_metric_name(cfg_.jump_metric)},
            {"bootstrap", "percentile, linear-interpolated quantiles"},
            {"weighting", cfg_.weight_by_story ? "story" : "continuation"},
            {"residualize_length", cfg_.residualize_length},
            {"mmd_bandwidth", "median heuristic, combined subsample, i<j pairs"},
            {"mmd_subsample_cap", cfg_.mmd_subsample_cap},
            {"mmd_ci", "sentence-vector bootstrap, bandwidth fixed at point fit"},
            {"prompt_control_order", "system text, user text, prefix"},
            {"lmm_inference", "profiled ML, Wald normal CIs and p-values"},
        };
        manifest["tables"] = nlohmann::json::array();
        for (const auto& t : tables_) manifest["tables"].push_back(t.id);
        manifest["totals"] = {
            {"stories", dataset_.report().n_stories},
            {"continuations", dataset_.report().n_continuations},
        };
        manifest["validation"] = nlohmann::json::parse(validation_counts_json());

        // The manifest is written last, atomically.
        std::string tmp_path = cfg_.output_dir + "/run_manifest.json.tmp";
        std::string final_path = cfg_.output_dir + "/run_manifest.json";
        {
            std::ofstream out(tmp_path, std::ios::binary);
            if (!out) throw Error(ErrorCode::io_error, "cannot write " + tmp_path);
            out << manifest.dump(2) << "\n";
        }
        std::filesystem::rename(tmp_path, final_path);
        result.manifest_path = final_path;
        result.written_files.push_back(final_path);
        return result;
    }

    std::string validation_counts_json() const {
        nlohmann::json counts;
        counts["stories_per_domain"] = dataset_.report().stories_per_domain;
        nlohmann::json cc = nlohmann::json::object();
        for (const auto& [domain, by_source] : dataset_.report().continuation_counts) {
            for (const auto& [source, by_cut] : by_source) {
                for (const auto& [cut, count] : by_cut) {
                    cc[domain + "/" + source + "/" + std::to_string(cut)] = count;
                }
            }
        }
        counts["continuations"] = std::move(cc);
        counts["unknown_domains"] = dataset_.report().unknown_domains;
        return counts.dump();
    }

    RunConfig cfg_;
    std::string config_json_;
    Provenance provenance_;
    Dataset dataset_;
    std::optional<EmbeddingStore> theme_store_;
    std::optional<EmbeddingStore> style_store_;
    std::map<ContinuationKey, std::map<int, AffectVector>> affect_by_key_;
    std::vector<ContMetrics> metrics_;
    GroupIndex pooled_;
    GroupIndex by_cut_;
    std::set<std::string> domains_;
    std::set<std::string> sources_;
    std::map<std::string, ExclusionAccount> accounts_;
    std::vector<ReportTable> tables_;
};

} // namespace

RunResult run(const RunConfig& config) {
    Runner runner(config);
    return runner.execute();
}

} // namespace flatkit
