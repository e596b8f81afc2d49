#include "flatkit/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "flatkit/error.hpp"
#include "flatkit/numeric.hpp"

namespace flatkit {

namespace {

struct Design {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<int> group;      // group index per row
    std::vector<int> group_size; // rows per group
    std::vector<std::string> column_names;
};

std::vector<std::string> sorted_levels(const LmmSpec& spec,
                                       const std::vector<LmmObservation>& data,
                                       const std::string& factor) {
    std::set<std::string> levels;
    for (const auto& obs : data) {
        auto it = obs.factors.find(factor);
        if (it == obs.factors.end()) {
            throw Error(ErrorCode::rank_deficient_design,
                        "observation missing factor " + factor);
        }
        levels.insert(it->second);
    }
    std::vector<std::string> out(levels.begin(), levels.end());
    auto ref = spec.reference_levels.find(factor);
    if (ref != spec.reference_levels.end()) {
        auto pos = std::find(out.begin(), out.end(), ref->second);
        if (pos != out.end()) std::rotate(out.begin(), pos, pos + 1);
    }
    return out;
}

double covariate_value(const LmmObservation& obs, const std::string& name) {
    auto it = obs.covariates.find(name);
    if (it == obs.covariates.end()) {
        throw Error(ErrorCode::rank_deficient_design,
                    "observation missing covariate " + name);
    }
    return it->second;
}

const std::string& factor_value(const LmmObservation& obs, const std::string& name) {
    return obs.factors.at(name);
}

Design build_design(const LmmSpec& spec, const std::vector<LmmObservation>& data) {
    Design design;
    const auto n = static_cast<Eigen::Index>(data.size());

    struct Column {
        std::string name;
        std::function<double(const LmmObservation&)> value;
    };
    std::vector<Column> columns;
    columns.push_back({"(intercept)", [](const LmmObservation&) { return 1.0; }});

    for (const auto& term : spec.fixed) {
        switch (term.kind) {
        case LmmTerm::Kind::factor: {
            auto levels = sorted_levels(spec, data, term.name);
            for (std::size_t l = 1; l < levels.size(); ++l) { // first = reference
                std::string level = levels[l];
                std::string factor = term.name;
                columns.push_back({factor + "[" + level + "]",
                                   [factor, level](const LmmObservation& obs) {
                                       return factor_value(obs, factor) == level
                                                  ? 1.0
                                                  : 0.0;
                                   }});
            }
            break;
        }
        case LmmTerm::Kind::covariate: {
            std::string name = term.name;
            columns.push_back(
                {name, [name](const LmmObservation& obs) {
                     return covariate_value(obs, name);
                 }});
            break;
        }
        case LmmTerm::Kind::interaction: {
            auto levels_a = sorted_levels(spec, data, term.name);
            auto levels_b = sorted_levels(spec, data, term.name_b);
            for (std::size_t a = 1; a < levels_a.size(); ++a) {
                for (std::size_t b = 1; b < levels_b.size(); ++b) {
                    std::string fa = term.name, la = levels_a[a];
                    std::string fb = term.name_b, lb = levels_b[b];
                    columns.push_back(
                        {fa + "[" + la + "]:" + fb + "[" + lb + "]",
                         [fa, la, fb, lb](const LmmObservation& obs) {
                             return factor_value(obs, fa) == la &&
                                            factor_value(obs, fb) == lb
                                        ? 1.0
                                        : 0.0;
                         }});
                }
            }
            break;
        }
        }
    }

    design.x.resize(n, static_cast<Eigen::Index>(columns.size()));
    design.y.resize(n);
    std::map<std::string, int> group_ids;
    design.group.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& obs = data[static_cast<std::size_t>(i)];
        design.y(i) = obs.response;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            design.x(i, static_cast<Eigen::Index>(c)) = columns[c].value(obs);
        }
        auto it = group_ids.try_emplace(obs.group,
                                        static_cast<int>(group_ids.size())).first;
        design.group[static_cast<std::size_t>(i)] = it->second;
    }
    design.group_size.assign(group_ids.size(), 0);
    for (int g : design.group) design.group_size[static_cast<std::size_t>(g)]++;
    for (const auto& col : columns) design.column_names.push_back(col.name);
    return design;
}

struct GlsSolve {
    Eigen::VectorXd beta;
    Eigen::MatrixXd xtvx; // X' V0^-1 X
    double rss = 0.0;     // (y - X beta)' V0^-1 (y - X beta)
    double log_det_v0 = 0.0;
};

// V0 = I + lambda * Z Z'; per group, V0^-1 = I - lambda/(1+lambda*n_g) J.
GlsSolve gls_solve(const Design& design, double lambda) {
    const auto p = design.x.cols();
    const auto n_groups = static_cast<std::size_t>(design.group_size.size());

    std::vector<Eigen::VectorXd> group_xsum(
        n_groups, Eigen::VectorXd::Zero(p));
    std::vector<double> group_ysum(n_groups, 0.0);
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    double yty = 0.0;
    for (Eigen::Index i = 0; i < design.x.rows(); ++i) {
        auto g = static_cast<std::size_t>(design.group[static_cast<std::size_t>(i)]);
        Eigen::VectorXd row = design.x.row(i).transpose();
        xtx.noalias() += row * row.transpose();
        xty.noalias() += row * design.y(i);
        yty += design.y(i) * design.y(i);
        group_xsum[g] += row;
        group_ysum[g] += design.y(i);
    }

    GlsSolve out;
    out.xtvx = xtx;
    Eigen::VectorXd xtvy = xty;
    double ytvy = yty;
    out.log_det_v0 = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        double n_g = static_cast<double>(design.group_size[g]);
        double shrink = lambda / (1.0 + lambda * n_g);
        out.xtvx.noalias() -= shrink * group_xsum[g] * group_xsum[g].transpose();
        xtvy.noalias() -= shrink * group_xsum[g] * group_ysum[g];
        ytvy -= shrink * group_ysum[g] * group_ysum[g];
        out.log_det_v0 += std::log1p(lambda * n_g);
    }
    out.beta = out.xtvx.ldlt().solve(xtvy);
    out.rss = ytvy - out.beta.dot(xtvy);
    if (out.rss < 0.0) out.rss = 0.0;
    return out;
}

// Profiled objective (negative twice-log-likelihood up to constants).
double profile_objective(const Design& design, double lambda, bool reml) {
    GlsSolve fit = gls_solve(design, lambda);
    auto n = static_cast<double>(design.x.rows());
    auto p = static_cast<double>(design.x.cols());
    if (fit.rss <= 0.0) return std::numeric_limits<double>::infinity();
    if (reml) {
        double log_det_xtvx = 0.0;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.xtvx);
        for (Eigen::Index i = 0; i < fit.xtvx.rows(); ++i) {
            log_det_xtvx += std::log(std::abs(ldlt.vectorD()(i)));
        }
        return (n - p) * std::log(fit.rss / (n - p)) + fit.log_det_v0 + log_det_xtvx;
    }
    return n * std::log(fit.rss / n) + fit.log_det_v0;
}

} // namespace

LmmFit lmm_fit(const LmmSpec& spec, const std::vector<LmmObservation>& data) {
    if (data.size() < 3) {
        throw Error(ErrorCode::rank_deficient_design,
                    "mixed model needs at least 3 observations");
    }
    Design design = build_design(spec, data);
    if (design.group_size.size() < 2) {
        throw Error(ErrorCode::rank_deficient_design,
                    "random intercept needs at least 2 groups");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
    if (qr.rank() < design.x.cols()) {
        throw Error(ErrorCode::rank_deficient_design,
                    "fixed-effect design is rank deficient (" +
                        std::to_string(qr.rank()) + " < " +
                        std::to_string(design.x.cols()) + ")");
    }

    // Coarse grid over log lambda plus lambda = 0, then golden-section
    // refinement around the best grid point. The profile is smooth in
    // log lambda; this is robust and deterministic.
    const double log_lo = std::log(1e-8);
    const double log_hi = std::log(1e8);
    const int grid_points = 81;
    double best_lambda = 0.0;
    double best_value = profile_objective(design, 0.0, spec.reml);
    int best_index = -1;
    for (int i = 0; i < grid_points; ++i) {
        double ll = log_lo + (log_hi - log_lo) * i / (grid_points - 1);
        double value = profile_objective(design, std::exp(ll), spec.reml);
        if (value < best_value) {
            best_value = value;
            best_lambda = std::exp(ll);
            best_index = i;
        }
    }
    bool boundary = best_index == -1 || best_index == grid_points - 1;
    if (best_index > 0 && best_index < grid_points - 1) {
        double step = (log_hi - log_lo) / (grid_points - 1);
        double a = std::log(best_lambda) - step;
        double b = std::log(best_lambda) + step;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = b - phi * (b - a);
        double d = a + phi * (b - a);
        double fc = profile_objective(design, std::exp(c), spec.reml);
        double fd = profile_objective(design, std::exp(d), spec.reml);
        for (int iter = 0; iter < 60; ++iter) {
            if (fc < fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = profile_objective(design, std::exp(c), spec.reml);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = profile_objective(design, std::exp(d), spec.reml);
            }
        }
        best_lambda = std::exp((a + b) / 2.0);
        best_value = profile_objective(design, best_lambda, spec.reml);
        // Keep lambda = 0 if it still wins.
        double at_zero = profile_objective(design, 0.0, spec.reml);
        if (at_zero <= best_value) {
            best_lambda = 0.0;
            best_value = at_zero;
            boundary = true;
        }
    }

    GlsSolve fit = gls_solve(design, best_lambda);
    auto n = static_cast<double>(design.x.rows());
    auto p = static_cast<double>(design.x.cols());

    LmmFit out;
    out.lambda = best_lambda;
    out.boundary_fit = boundary;
    out.n_obs = data.size();
    out.n_groups = design.group_size.size();
    out.var_residual = spec.reml ? fit.rss / (n - p) : fit.rss / n;
    out.var_group = best_lambda * out.var_residual;
    out.log_likelihood =
        -0.5 * (n * std::log(2.0 * M_PI * out.var_residual) + fit.log_det_v0 +
                fit.rss / out.var_residual);

    Eigen::MatrixXd cov = fit.xtvx.inverse() * out.var_residual;
    for (Eigen::Index j = 0; j < design.x.cols(); ++j) {
        LmmEffect effect;
        effect.name = design.column_names[static_cast<std::size_t>(j)];
        effect.estimate = fit.beta(j);
        effect.std_error = std::sqrt(std::max(0.0, cov(j, j)));
        effect.ci_low = effect.estimate - z_975 * effect.std_error;
        effect.ci_high = effect.estimate + z_975 * effect.std_error;
        if (effect.std_error > 0.0) {
            double z = std::abs(effect.estimate) / effect.std_error;
            effect.p_value = std::erfc(z / std::sqrt(2.0));
            if (effect.p_value < 5e-324) effect.p_value = 5e-324;
        } else {
            effect.p_value = effect.estimate == 0.0 ? 1.0 : 5e-324;
        }
        out.effects.push_back(std::move(effect));
    }
    return out;
}

} // namespace flatkit
