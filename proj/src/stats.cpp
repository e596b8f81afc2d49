#include "flatkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flatkit/error.hpp"

namespace flatkit {

const char* ci_method_name(CiMethod m) {
    switch (m) {
    case CiMethod::story_bootstrap: return "story_bootstrap";
    case CiMethod::sentence_bootstrap: return "sentence_bootstrap";
    case CiMethod::component_bound: return "component_bound";
    case CiMethod::point_only: return "point_only";
    }
    return "?";
}

MetricEstimate story_bootstrap_ci(
    const std::vector<std::vector<double>>& story_values,
    const std::function<double(const std::vector<const std::vector<double>*>&)>& statistic,
    std::size_t n_replicates, std::uint64_t seed, double level) {
    return bootstrap_ci<std::vector<double>>(story_values, statistic, n_replicates,
                                             seed, level, CiMethod::story_bootstrap);
}

MetricEstimate story_bootstrap_mean(const std::vector<std::vector<double>>& story_values,
                                    std::size_t n_replicates, std::uint64_t seed,
                                    double level) {
    auto statistic = [](const std::vector<const std::vector<double>*>& stories) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto* story : stories) {
            for (double v : *story) {
                sum += v;
                ++count;
            }
        }
        return count == 0 ? 0.0 : sum / static_cast<double>(count);
    };
    return story_bootstrap_ci(story_values, statistic, n_replicates, seed, level);
}

MetricEstimate component_bound_ci(const MetricEstimate& a, const MetricEstimate& b) {
    if (a.method == CiMethod::point_only || b.method == CiMethod::point_only) {
        throw Error(ErrorCode::missing_interval,
                    "component-bound interval needs intervals on both components");
    }
    MetricEstimate est;
    est.value = a.value + b.value;
    est.ci_low = a.ci_low + b.ci_low;
    est.ci_high = a.ci_high + b.ci_high;
    est.n_units = std::min(a.n_units, b.n_units);
    est.method = CiMethod::component_bound;
    est.seed = a.seed;
    return est;
}

ResidualizedMetric residualize(const std::vector<double>& values,
                               const std::vector<double>& lengths) {
    if (values.size() != lengths.size() || values.size() < 3) {
        throw Error(ErrorCode::parse_error,
                    "residualize needs >= 3 paired observations");
    }
    const std::size_t n = values.size();
    double mean_q = mean(values);
    double mean_t = mean(lengths);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dt = lengths[i] - mean_t;
        sxx += dt * dt;
        sxy += dt * (values[i] - mean_q);
    }
    if (sxx == 0.0) {
        throw Error(ErrorCode::constant_length,
                    "lengths are constant; cannot residualize");
    }
    ResidualizedMetric out;
    out.original = values;
    out.lengths = lengths;
    out.slope = sxy / sxx;
    out.intercept = mean_q - out.slope * mean_t;
    out.residualized.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double fitted = out.intercept + out.slope * lengths[i];
        out.residualized[i] = (values[i] - fitted) + mean_q;
    }
    return out;
}

HolmResult holm_bonferroni(const std::vector<double>& p_values, double alpha) {
    const std::size_t m = p_values.size();
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error(ErrorCode::invalid_p,
                        "p-value outside [0, 1]: " + std::to_string(p));
        }
    }
    HolmResult result;
    result.reject.assign(m, false);
    result.adjusted.assign(m, 0.0);
    if (m == 0) return result;

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return p_values[a] < p_values[b];
                     });
    double running_max = 0.0;
    bool stopped = false;
    for (std::size_t rank = 0; rank < m; ++rank) {
        std::size_t idx = order[rank];
        double scaled = static_cast<double>(m - rank) * p_values[idx];
        running_max = std::max(running_max, std::min(1.0, scaled));
        result.adjusted[idx] = running_max;
        if (!stopped && scaled <= alpha) {
            result.reject[idx] = true;
        } else {
            stopped = true;
        }
    }
    return result;
}

namespace {

double domain_range(const std::vector<const std::vector<double>*>& stories,
                    const std::vector<std::size_t>& cell_offsets) {
    // stories are grouped per domain cell; offsets delimit each cell.
    double max_mean = -std::numeric_limits<double>::infinity();
    double min_mean = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c + 1 < cell_offsets.size(); ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = cell_offsets[c]; i < cell_offsets[c + 1]; ++i) {
            for (double v : *stories[i]) {
                sum += v;
                ++count;
            }
        }
        double mean_value = count == 0 ? 0.0 : sum / static_cast<double>(count);
        max_mean = std::max(max_mean, mean_value);
        min_mean = std::min(min_mean, mean_value);
    }
    return max_mean - min_mean;
}

// Resamples stories independently within each domain cell and recomputes the
// cross-domain range.
MetricEstimate range_with_ci(const std::vector<DomainCell>& cells,
                             std::size_t n_replicates, std::uint64_t seed,
                             double level) {
    std::vector<const std::vector<double>*> original;
    std::vector<std::size_t> offsets{0};
    for (const auto& cell : cells) {
        for (const auto& story : cell.story_values) original.push_back(&story);
        offsets.push_back(original.size());
    }
    MetricEstimate est;
    est.n_units = original.size();
    est.method = CiMethod::story_bootstrap;
    est.seed = seed;
    est.value = domain_range(original, offsets);
    if (n_replicates == 0) {
        est.method = CiMethod::point_only;
        est.ci_low = est.ci_high = est.value;
        return est;
    }
    std::vector<double> replicates(n_replicates);
    std::vector<const std::vector<double>*> resampled(original.size());
    for (std::size_t b = 0; b < n_replicates; ++b) {
        for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
            Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(b) << 16) | c));
            std::size_t lo = offsets[c];
            std::size_t n_cell = offsets[c + 1] - lo;
            for (std::size_t i = 0; i < n_cell; ++i) {
                resampled[lo + i] = original[lo + rng.below(n_cell)];
            }
        }
        replicates[b] = domain_range(resampled, offsets);
    }
    double alpha = (1.0 - level) / 2.0;
    est.ci_low = quantile(replicates, alpha);
    est.ci_high = quantile(std::move(replicates), 1.0 - alpha);
    return est;
}

} // namespace

RangeReduction range_reduction(const std::vector<DomainCell>& endpoint_a,
                               const std::vector<DomainCell>& endpoint_b,
                               std::size_t n_replicates, std::uint64_t seed,
                               double level) {
    if (endpoint_a.size() < 2 || endpoint_b.size() < 2) {
        throw Error(ErrorCode::too_few_domains,
                    "range reduction needs at least 2 domains per endpoint");
    }
    RangeReduction out;
    out.range_a = range_with_ci(endpoint_a, n_replicates, mix_seed(seed, 0xa), level);
    out.range_b = range_with_ci(endpoint_b, n_replicates, mix_seed(seed, 0xb), level);
    if (out.range_a.value > 0.0) {
        out.reduction = 1.0 - out.range_b.value / out.range_a.value;
    } else {
        out.reduction = out.range_b.value == 0.0
                            ? 0.0
                            : -std::numeric_limits<double>::infinity();
    }
    return out;
}

} // namespace flatkit
