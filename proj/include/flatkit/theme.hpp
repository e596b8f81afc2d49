#pragma once

#include <vector>

#include <Eigen/Core>

namespace flatkit {

enum class JumpMetric { l2, cosine };

// Consecutive-sentence distances of one trajectory.
struct JumpSeries {
    std::vector<double> distances; // length = sentence count - 1
    JumpMetric metric = JumpMetric::l2;
};

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Distances between consecutive sentence vectors (rows of `trajectory`).
// Throws TooFewSentences for fewer than 2 rows.
JumpSeries jump_series(const Eigen::MatrixXd& trajectory, JumpMetric metric);

// Coefficient of variation of the jump sizes: sd / mean. The default divisor
// is n-1; sd_ddof = 0 switches to the population divisor for sensitivity
// analysis. Throws TooFewJumps (< 2 jumps) and DegenerateTrajectory (mean 0).
double jump_cv(const JumpSeries& series, int sd_ddof = 1);

} // namespace flatkit
