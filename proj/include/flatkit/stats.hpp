#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flatkit/numeric.hpp"
#include "flatkit/rng.hpp"

namespace flatkit {

enum class CiMethod { story_bootstrap, sentence_bootstrap, component_bound, point_only };

const char* ci_method_name(CiMethod m);

struct MetricEstimate {
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_units = 0;
    CiMethod method = CiMethod::point_only;
    std::uint64_t seed = 0;
};

// Percentile bootstrap over units of type T. The statistic sees the resampled
// multiset as pointers into the original units. Per-replicate RNG streams are
// derived from (seed, replicate index) so evaluation order cannot change the
// interval. B = 0 degrades to a point-only estimate.
template <typename T>
MetricEstimate bootstrap_ci(
    const std::vector<T>& units,
    const std::function<double(const std::vector<const T*>&)>& statistic,
    std::size_t n_replicates, std::uint64_t seed, double level = 0.95,
    CiMethod method = CiMethod::story_bootstrap) {
    MetricEstimate est;
    est.n_units = units.size();
    est.method = method;
    est.seed = seed;
    std::vector<const T*> original;
    original.reserve(units.size());
    for (const auto& u : units) original.push_back(&u);
    est.value = statistic(original);
    if (n_replicates == 0 || units.size() <= 1) {
        est.ci_low = est.ci_high = est.value;
        if (n_replicates == 0) est.method = CiMethod::point_only;
        return est;
    }
    std::vector<double> replicates(n_replicates);
    std::vector<const T*> resampled(units.size());
    for (std::size_t b = 0; b < n_replicates; ++b) {
        Rng rng(mix_seed(seed, b));
        for (std::size_t i = 0; i < units.size(); ++i) {
            resampled[i] = &units[rng.below(units.size())];
        }
        replicates[b] = statistic(resampled);
    }
    double alpha = (1.0 - level) / 2.0;
    est.ci_low = quantile(replicates, alpha);
    est.ci_high = quantile(std::move(replicates), 1.0 - alpha);
    return est;
}

// Resamples stories with replacement; `story_values` holds each story's
// continuation-level values. The statistic receives the resampled stories.
MetricEstimate story_bootstrap_ci(
    const std::vector<std::vector<double>>& story_values,
    const std::function<double(const std::vector<const std::vector<double>*>&)>& statistic,
    std::size_t n_replicates, std::uint64_t seed, double level = 0.95);

// Mean of all values, stories resampled with replacement.
MetricEstimate story_bootstrap_mean(const std::vector<std::vector<double>>& story_values,
                                    std::size_t n_replicates, std::uint64_t seed,
                                    double level = 0.95);

// Sums two interval estimates; bounds add component-wise. Both inputs must
// carry real intervals (MissingInterval otherwise).
MetricEstimate component_bound_ci(const MetricEstimate& a, const MetricEstimate& b);

struct ResidualizedMetric {
    std::vector<double> original;
    std::vector<double> lengths;
    double intercept = 0.0;
    double slope = 0.0;
    std::vector<double> residualized; // residual + mean(original)
};

// OLS fit of value on length; residualized values keep the original scale.
// Throws ConstantLength when length has no variance; needs >= 3 observations.
ResidualizedMetric residualize(const std::vector<double>& values,
                               const std::vector<double>& lengths);

struct HolmResult {
    std::vector<bool> reject;
    std::vector<double> adjusted; // monotone in sorted order, capped at 1
};

// Holm-Bonferroni step-down correction. Throws InvalidP for p outside [0,1].
HolmResult holm_bonferroni(const std::vector<double>& p_values, double alpha = 0.05);

// Cross-domain range (max domain mean - min domain mean) at two endpoints,
// and the relative reduction between them. CIs resample stories within each
// (domain, endpoint) cell; the reduction is reported from point estimates.
struct DomainCell {
    std::string domain;
    std::vector<std::vector<double>> story_values;
};

struct RangeReduction {
    MetricEstimate range_a;
    MetricEstimate range_b;
    double reduction = 0.0; // 1 - range_b / range_a
};

RangeReduction range_reduction(const std::vector<DomainCell>& endpoint_a,
                               const std::vector<DomainCell>& endpoint_b,
                               std::size_t n_replicates, std::uint64_t seed,
                               double level = 0.95);

} // namespace flatkit
