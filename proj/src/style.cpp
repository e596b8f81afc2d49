#include "flatkit/style.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "flatkit/error.hpp"
#include "flatkit/numeric.hpp"
#include "flatkit/rng.hpp"

namespace flatkit {

namespace {

constexpr std::uint64_t kSubsampleStream = 0x5f37b5a1ULL;

// Cosine-distance matrix between the rows of A and B.
Eigen::MatrixXd cosine_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::VectorXd na = a.rowwise().norm();
    Eigen::VectorXd nb = b.rowwise().norm();
    for (Eigen::Index i = 0; i < na.size(); ++i) {
        if (na(i) == 0.0) na(i) = 1.0;
    }
    for (Eigen::Index j = 0; j < nb.size(); ++j) {
        if (nb(j) == 0.0) nb(j) = 1.0;
    }
    Eigen::MatrixXd sim = (a * b.transpose()).array().colwise() / na.array();
    sim = sim.array().rowwise() / nb.transpose().array();
    return (1.0 - sim.array()).max(0.0).matrix();
}

Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& points, std::size_t cap,
                               std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n <= cap) return points;
    Rng rng(seed);
    auto indices = rng.sample_without_replacement(n, cap);
    std::sort(indices.begin(), indices.end());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(cap), points.cols());
    for (std::size_t i = 0; i < cap; ++i) {
        out.row(static_cast<Eigen::Index>(i)) =
            points.row(static_cast<Eigen::Index>(indices[i]));
    }
    return out;
}

// Lexicographic order on (rows, cols, elements). The estimator is symmetric
// in its arguments; evaluating both orders through one canonical layout makes
// mmd2(A, B) and mmd2(B, A) bit-identical.
bool canonical_before(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    if (a.cols() != b.cols()) return a.cols() < b.cols();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (a(i, j) != b(i, j)) return a(i, j) < b(i, j);
        }
    }
    return false;
}

double mmd2_from_distances(const Eigen::MatrixXd& d_aa, const Eigen::MatrixXd& d_bb,
                           const Eigen::MatrixXd& d_ab, double sigma) {
    const double denom = 2.0 * sigma * sigma;
    const auto n = static_cast<double>(d_aa.rows());
    const auto m = static_cast<double>(d_bb.rows());
    // Diagonals contribute exp(0) = 1 each; remove them from the within-group
    // sums to keep the estimator unbiased.
    double term_a =
        ((-d_aa.array().square() / denom).exp().sum() - n) / (n * (n - 1.0));
    double term_b =
        ((-d_bb.array().square() / denom).exp().sum() - m) / (m * (m - 1.0));
    double cross = (-d_ab.array().square() / denom).exp().sum() * 2.0 / (n * m);
    return term_a + term_b - cross;
}

} // namespace

std::vector<StyleCentroid> style_centroids(
    const std::vector<ContinuationRecord>& continuations,
    const EmbeddingStore& embeddings) {
    std::vector<StyleCentroid> centroids;
    centroids.reserve(continuations.size());
    for (const auto& cont : continuations) {
        Eigen::MatrixXd vectors = embeddings.vectors_for(cont.key);
        if (static_cast<std::size_t>(vectors.rows()) != cont.sentences.size()) {
            throw Error(ErrorCode::missing_embedding,
                        cont.key.to_string() + " has " +
                            std::to_string(cont.sentences.size()) + " sentences but " +
                            std::to_string(vectors.rows()) + " vectors");
        }
        centroids.push_back({cont.key, vectors.colwise().mean().transpose()});
    }
    return centroids;
}

double median_bandwidth(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    if (n < 2) {
        throw Error(ErrorCode::degenerate_sample,
                    "median heuristic needs at least 2 points");
    }
    Eigen::MatrixXd d = cosine_distances(points, points);
    std::vector<double> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            pairs.push_back(d(i, j));
        }
    }
    double med = median(pairs);
    if (med > 0.0) return med;
    double smallest_positive = 0.0;
    for (double v : pairs) {
        if (v > 0.0 && (smallest_positive == 0.0 || v < smallest_positive)) {
            smallest_positive = v;
        }
    }
    if (smallest_positive == 0.0) {
        throw Error(ErrorCode::degenerate_sample,
                    "all pairwise distances are zero; no usable bandwidth");
    }
    return smallest_positive;
}

double mmd2_unbiased(const Eigen::MatrixXd& group_a, const Eigen::MatrixXd& group_b,
                     const KernelConfig& cfg) {
    // Both groups draw from identically seeded streams so the subsample does
    // not depend on argument order.
    std::uint64_t sub_seed = mix_seed(cfg.seed, kSubsampleStream);
    Eigen::MatrixXd a = subsample_rows(group_a, cfg.subsample_cap, sub_seed);
    Eigen::MatrixXd b = subsample_rows(group_b, cfg.subsample_cap, sub_seed);
    if (a.rows() < 2 || b.rows() < 2) {
        throw Error(ErrorCode::degenerate_sample,
                    "each group needs at least 2 vectors after subsampling");
    }
    if (canonical_before(b, a)) std::swap(a, b);

    double sigma = cfg.bandwidth;
    if (sigma <= 0.0) {
        Eigen::MatrixXd combined(a.rows() + b.rows(), a.cols());
        combined << a, b;
        sigma = median_bandwidth(combined);
    }
    return mmd2_from_distances(cosine_distances(a, a), cosine_distances(b, b),
                               cosine_distances(a, b), sigma);
}

Mmd2Result mmd2_with_ci(const Eigen::MatrixXd& group_a, const Eigen::MatrixXd& group_b,
                        const KernelConfig& cfg, std::size_t n_replicates,
                        std::uint64_t bootstrap_seed, double level) {
    std::uint64_t sub_seed = mix_seed(cfg.seed, kSubsampleStream);
    Eigen::MatrixXd a = subsample_rows(group_a, cfg.subsample_cap, sub_seed);
    Eigen::MatrixXd b = subsample_rows(group_b, cfg.subsample_cap, sub_seed);
    if (a.rows() < 2 || b.rows() < 2) {
        throw Error(ErrorCode::degenerate_sample,
                    "each group needs at least 2 vectors after subsampling");
    }
    if (canonical_before(b, a)) std::swap(a, b);

    Mmd2Result result;
    result.n_a = static_cast<std::size_t>(a.rows());
    result.n_b = static_cast<std::size_t>(b.rows());
    result.sigma = cfg.bandwidth > 0.0 ? cfg.bandwidth : [&] {
        Eigen::MatrixXd combined(a.rows() + b.rows(), a.cols());
        combined << a, b;
        return median_bandwidth(combined);
    }();
    result.value = mmd2_from_distances(cosine_distances(a, a), cosine_distances(b, b),
                                       cosine_distances(a, b), result.sigma);
    if (n_replicates == 0) {
        result.ci_low = result.ci_high = result.value;
        return result;
    }

    auto resample = [](const Eigen::MatrixXd& src, Rng& rng) {
        Eigen::MatrixXd out(src.rows(), src.cols());
        for (Eigen::Index i = 0; i < src.rows(); ++i) {
            out.row(i) = src.row(static_cast<Eigen::Index>(
                rng.below(static_cast<std::uint64_t>(src.rows()))));
        }
        return out;
    };
    std::vector<double> replicates(n_replicates);
    for (std::size_t r = 0; r < n_replicates; ++r) {
        Rng rng(mix_seed(bootstrap_seed, r));
        Eigen::MatrixXd ar = resample(a, rng);
        Eigen::MatrixXd br = resample(b, rng);
        replicates[r] = mmd2_from_distances(cosine_distances(ar, ar),
                                            cosine_distances(br, br),
                                            cosine_distances(ar, br), result.sigma);
    }
    double alpha = (1.0 - level) / 2.0;
    result.ci_low = quantile(replicates, alpha);
    result.ci_high = quantile(std::move(replicates), 1.0 - alpha);
    return result;
}

double across_story_variance(const Eigen::MatrixXd& centroids) {
    const Eigen::Index n = centroids.rows();
    if (n < 2) {
        throw Error(ErrorCode::too_few_centroids,
                    "across-story variance needs at least 2 centroids, got " +
                        std::to_string(n));
    }
    Eigen::RowVectorXd mean = centroids.colwise().mean();
    return (centroids.rowwise() - mean).squaredNorm() / static_cast<double>(n - 1);
}

double variance_ratio(double model_variance, double human_variance) {
    if (human_variance <= 0.0) {
        throw Error(ErrorCode::zero_human_variance,
                    "human across-story variance is zero; ratio undefined");
    }
    return model_variance / human_variance;
}

double fixed_k_variance(const std::vector<Eigen::MatrixXd>& continuation_sentences,
                        const FixedKConfig& cfg) {
    if (continuation_sentences.size() < 2) {
        throw Error(ErrorCode::too_few_centroids,
                    "fixed-K variance needs at least 2 continuations");
    }
    for (const auto& m : continuation_sentences) {
        if (m.rows() < 1) {
            throw Error(ErrorCode::empty_continuation,
                        "fixed-K variance needs at least 1 sentence per continuation");
        }
    }
    const Eigen::Index dim = continuation_sentences.front().cols();
    const auto n_cont = static_cast<Eigen::Index>(continuation_sentences.size());
    double total = 0.0;
    for (int r = 0; r < cfg.resamples; ++r) {
        Eigen::MatrixXd centroids(n_cont, dim);
        for (Eigen::Index c = 0; c < n_cont; ++c) {
            const Eigen::MatrixXd& sentences =
                continuation_sentences[static_cast<std::size_t>(c)];
            // Per-(continuation, resample) stream keeps the estimate
            // independent of evaluation order.
            Rng rng(mix_seed(cfg.seed, (static_cast<std::uint64_t>(r) << 32) |
                                           static_cast<std::uint64_t>(c)));
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dim);
            for (int k = 0; k < cfg.k; ++k) {
                auto pick = static_cast<Eigen::Index>(
                    rng.below(static_cast<std::uint64_t>(sentences.rows())));
                acc += sentences.row(pick);
            }
            centroids.row(c) = acc / static_cast<double>(cfg.k);
        }
        total += across_story_variance(centroids);
    }
    return total / static_cast<double>(cfg.resamples);
}

Eigen::MatrixXd PcaView::project(const Eigen::MatrixXd& points) const {
    Eigen::MatrixXd centered = points.rowwise() - mean.transpose();
    centered = centered.array().rowwise() / scale.transpose().array();
    return centered * components;
}

PcaView pca_view(const Eigen::MatrixXd& points, int n_components,
                 const Standardization& standardization) {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    if (n < n_components + 1) {
        throw Error(ErrorCode::degenerate_sample,
                    "PCA with " + std::to_string(n_components) +
                        " components needs at least " +
                        std::to_string(n_components + 1) + " samples, got " +
                        std::to_string(n));
    }
    PcaView view;
    switch (standardization.mode) {
    case Standardization::Mode::none:
        view.mean = Eigen::VectorXd::Zero(d);
        view.scale = Eigen::VectorXd::Ones(d);
        break;
    case Standardization::Mode::fit: {
        view.mean = points.colwise().mean().transpose();
        Eigen::MatrixXd centered = points.rowwise() - view.mean.transpose();
        view.scale = (centered.array().square().colwise().sum() /
                      static_cast<double>(n - 1))
                         .sqrt()
                         .transpose();
        break;
    }
    case Standardization::Mode::external:
        view.mean = standardization.mean;
        view.scale = standardization.sd;
        break;
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        if (view.scale(j) <= 0.0) view.scale(j) = 1.0; // constant dims pass through
    }

    Eigen::MatrixXd x = points.rowwise() - view.mean.transpose();
    x = x.array().rowwise() / view.scale.transpose().array();
    Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::VectorXd eigenvalues = solver.eigenvalues();   // ascending
    Eigen::MatrixXd eigenvectors = solver.eigenvectors();

    double total_variance = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        if (eigenvalues(i) < 0.0) eigenvalues(i) = 0.0;
        total_variance += eigenvalues(i);
    }
    double tol = eigenvalues.size() > 0
                     ? eigenvalues(eigenvalues.size() - 1) * 1e-12 * static_cast<double>(d)
                     : 0.0;

    view.components.resize(d, n_components);
    view.explained_shares.resize(n_components);
    view.rank = 0;
    for (int c = 0; c < n_components; ++c) {
        Eigen::Index src = eigenvalues.size() - 1 - c;
        Eigen::VectorXd component = eigenvectors.col(src);
        // Deterministic sign: the largest-magnitude entry is positive.
        Eigen::Index arg_max = 0;
        component.cwiseAbs().maxCoeff(&arg_max);
        if (component(arg_max) < 0.0) component = -component;
        view.components.col(c) = component;
        double share =
            total_variance > 0.0 ? eigenvalues(src) / total_variance : 0.0;
        if (eigenvalues(src) <= tol) share = 0.0;
        view.explained_shares(c) = share;
        if (eigenvalues(src) > tol) view.rank++;
    }
    view.rank_deficient = view.rank < n_components;
    view.projection = x * view.components;
    return view;
}

ManifoldPrecision manifold_precision(const Eigen::MatrixXd& human,
                                     const Eigen::MatrixXd& model,
                                     const ManifoldConfig& cfg) {
    const Eigen::Index n = human.rows();
    if (n <= cfg.neighbor_k) {
        throw Error(ErrorCode::too_few_human_points,
                    "need more than neighbor_k=" + std::to_string(cfg.neighbor_k) +
                        " human points, got " + std::to_string(n));
    }
    int dims = std::min<int>(cfg.pca_dims, static_cast<int>(human.cols()));
    dims = std::min<int>(dims, static_cast<int>(n - 1));
    Standardization std_mode =
        cfg.standardize ? Standardization::fit_data() : Standardization::off();
    PcaView view = pca_view(human, dims, std_mode);
    Eigen::MatrixXd h = view.projection;
    Eigen::MatrixXd m = view.project(model);

    // Leave-one-out k-th nearest distances within the human set.
    Eigen::VectorXd h_sq = h.rowwise().squaredNorm();
    Eigen::MatrixXd gram = h * h.transpose();
    std::vector<double> knn_distances(static_cast<std::size_t>(n));
    std::vector<double> row(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            double sq = h_sq(i) + h_sq(j) - 2.0 * gram(i, j);
            row[w++] = sq > 0.0 ? sq : 0.0;
        }
        std::nth_element(row.begin(), row.begin() + (cfg.neighbor_k - 1), row.end());
        knn_distances[static_cast<std::size_t>(i)] =
            std::sqrt(row[static_cast<std::size_t>(cfg.neighbor_k - 1)]);
    }
    ManifoldPrecision result;
    result.epsilon = quantile(knn_distances, cfg.radius_quantile);
    result.n_human = static_cast<std::size_t>(n);
    result.n_model = static_cast<std::size_t>(m.rows());

    Eigen::VectorXd m_sq = m.rowwise().squaredNorm();
    Eigen::MatrixXd cross = m * h.transpose();
    std::size_t inside = 0;
    const double eps_sq = result.epsilon * result.epsilon;
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            double sq = m_sq(j) + h_sq(i) - 2.0 * cross(j, i);
            if (sq < best) best = sq;
        }
        if (best <= eps_sq || best <= 0.0) ++inside;
    }
    result.precision = result.n_model == 0
                           ? 0.0
                           : static_cast<double>(inside) /
                                 static_cast<double>(result.n_model);
    return result;
}

} // namespace flatkit
