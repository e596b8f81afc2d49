#include "flatkit/theme.hpp"

#include <cmath>

#include "flatkit/error.hpp"
#include "flatkit/numeric.hpp"

namespace flatkit {

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double na = a.norm();
    double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 1.0; // zero vector has no direction
    return 1.0 - a.dot(b) / (na * nb);
}

JumpSeries jump_series(const Eigen::MatrixXd& trajectory, JumpMetric metric) {
    if (trajectory.rows() < 2) {
        throw Error(ErrorCode::too_few_sentences,
                    "trajectory has " + std::to_string(trajectory.rows()) +
                        " sentence(s); need at least 2 for jumps");
    }
    JumpSeries series;
    series.metric = metric;
    series.distances.reserve(static_cast<std::size_t>(trajectory.rows() - 1));
    for (Eigen::Index t = 1; t < trajectory.rows(); ++t) {
        if (metric == JumpMetric::l2) {
            series.distances.push_back((trajectory.row(t) - trajectory.row(t - 1)).norm());
        } else {
            series.distances.push_back(cosine_distance(trajectory.row(t).transpose(),
                                                       trajectory.row(t - 1).transpose()));
        }
    }
    return series;
}

double jump_cv(const JumpSeries& series, int sd_ddof) {
    if (series.distances.size() < 2) {
        throw Error(ErrorCode::too_few_jumps,
                    "jump CV needs at least 2 jumps, got " +
                        std::to_string(series.distances.size()));
    }
    double m = mean(series.distances);
    if (m <= 0.0) {
        throw Error(ErrorCode::degenerate_trajectory,
                    "mean jump size is zero; CV undefined");
    }
    return sample_sd(series.distances, sd_ddof) / m;
}

} // namespace flatkit
