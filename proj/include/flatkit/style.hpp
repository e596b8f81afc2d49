#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "flatkit/corpus.hpp"
#include "flatkit/embedding.hpp"

namespace flatkit {

// Arithmetic mean of one continuation's sentence style vectors. Centroids
// are not re-normalized after averaging.
struct StyleCentroid {
    ContinuationKey key;
    Eigen::VectorXd vector;
};

// One centroid per continuation of `dataset` that the store covers. Every
// sentence must have a vector; throws MissingEmbedding naming the gap.
std::vector<StyleCentroid> style_centroids(const std::vector<ContinuationRecord>& continuations,
                                           const EmbeddingStore& embeddings);

struct KernelConfig {
    double bandwidth = 0.0;        // 0 = median heuristic on the combined subsample
    std::size_t subsample_cap = 1000;
    std::uint64_t seed = 0;
};

// Median of cosine distances over all unordered pairs of `points` (rows).
// Zero distances are included; a zero median falls back to the smallest
// positive distance. Throws DegenerateSample when every pair coincides.
double median_bandwidth(const Eigen::MatrixXd& points);

// Unbiased three-term MMD^2 estimator with the RBF-on-cosine kernel
// k(x,y) = exp(-d_cos(x,y)^2 / (2 sigma^2)). Groups larger than the cap are
// subsampled with the configured seed. May legitimately be negative.
double mmd2_unbiased(const Eigen::MatrixXd& group_a, const Eigen::MatrixXd& group_b,
                     const KernelConfig& cfg);

// The same estimator plus a sentence-vector bootstrap CI computed after the
// subsampling step, resampling each group's subsampled vectors. The kernel
// bandwidth is fixed at the point-estimate value across replicates.
struct Mmd2Result {
    double value = 0.0;
    double sigma = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
};

Mmd2Result mmd2_with_ci(const Eigen::MatrixXd& group_a, const Eigen::MatrixXd& group_b,
                        const KernelConfig& cfg, std::size_t n_replicates,
                        std::uint64_t bootstrap_seed, double level = 0.95);

// Trace of the sample covariance (n-1 divisor) of centroid vectors (rows).
// Throws TooFewCentroids for fewer than 2 rows.
double across_story_variance(const Eigen::MatrixXd& centroids);

// Model variance over matched human variance; throws ZeroHumanVariance.
double variance_ratio(double model_variance, double human_variance);

// Across-story variance when every centroid is re-estimated from exactly K
// sentences sampled uniformly with replacement; the estimate is the mean
// over `resamples` seeded Monte Carlo re-draws.
struct FixedKConfig {
    int k = 8;
    int resamples = 64;
    std::uint64_t seed = 0;
};

double fixed_k_variance(const std::vector<Eigen::MatrixXd>& continuation_sentences,
                        const FixedKConfig& cfg);

// --- PCA ---------------------------------------------------------------

struct Standardization {
    enum class Mode { none, fit, external };
    Mode mode = Mode::fit;
    Eigen::VectorXd mean; // used when mode == external
    Eigen::VectorXd sd;   // used when mode == external; zeros pass through unscaled

    static Standardization off() { return {Mode::none, {}, {}}; }
    static Standardization fit_data() { return {Mode::fit, {}, {}}; }
    static Standardization external(Eigen::VectorXd mu, Eigen::VectorXd sigma) {
        return {Mode::external, std::move(mu), std::move(sigma)};
    }
};

struct PcaView {
    Eigen::MatrixXd components;        // dim x n_components, orthonormal columns
    Eigen::VectorXd explained_shares;  // non-increasing, sums to <= 1
    Eigen::MatrixXd projection;        // input rows projected to components
    Eigen::VectorXd mean;              // standardization actually applied
    Eigen::VectorXd scale;
    int rank = 0;                      // components beyond rank carry zero variance
    bool rank_deficient = false;

    // Project other points with the fitted standardization and components.
    Eigen::MatrixXd project(const Eigen::MatrixXd& points) const;
};

// Eigendecomposition of the (standardized) covariance. Sign convention: each
// component's largest-magnitude entry is positive. Requires
// n >= n_components + 1 rows; rank deficiency is reported, not an error.
PcaView pca_view(const Eigen::MatrixXd& points, int n_components,
                 const Standardization& standardization);

// --- Manifold precision -------------------------------------------------

struct ManifoldConfig {
    int pca_dims = 50;
    int neighbor_k = 5;
    double radius_quantile = 0.95;
    bool standardize = true; // z-score by human per-dimension mean/sd
};

// Fraction of model points whose nearest-human distance (after human-fit
// standardization and PCA) is within epsilon, where epsilon is the
// radius_quantile of leave-one-out neighbor_k-th nearest distances within
// the human set. Throws TooFewHumanPoints when |H| <= neighbor_k.
struct ManifoldPrecision {
    double precision = 0.0;
    double epsilon = 0.0;
    std::size_t n_human = 0;
    std::size_t n_model = 0;
};

ManifoldPrecision manifold_precision(const Eigen::MatrixXd& human,
                                     const Eigen::MatrixXd& model,
                                     const ManifoldConfig& cfg);

} // namespace flatkit
