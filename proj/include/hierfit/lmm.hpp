#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierfit/design.hpp"
#include "hierfit/model_spec.hpp"
#include "hierfit/table.hpp"

namespace hierfit::lmm {

/// Random-intercept variances (outer level first), residual variance and the
/// optional power-of-covariate exponent. Residual variance of observation i
/// is sigma2 * v_i^(2 delta) / w_i for prior weight w_i.
struct VarianceComponents {
    std::vector<std::string> levels;
    std::vector<double> level_variances;
    double sigma2 = 1.0;
    std::optional<double> delta;

    bool operator==(const VarianceComponents&) const = default;
};

/// Scaled covariance Lambda = V / sigma2 = diag(v^(2 delta) / w) + sum_l r_l Z_l Z_l'
/// of a strictly nested random-intercept model. Products with Lambda^-1 and
/// log|Lambda| are obtained by applying Sherman-Morrison one group at a time,
/// from the innermost level outwards, so no n x n matrix is ever formed.
class NestedCovariance {
public:
    NestedCovariance(const std::vector<data::GroupLevel>& levels, Eigen::VectorXd v, Eigen::VectorXd w);

    std::size_t n() const { return static_cast<std::size_t>(v_.size()); }
    std::size_t n_levels() const { return group_of_row_.size(); }

    Eigen::VectorXd base_diagonal(double delta) const;

    /// Lambda^-1 M.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& M, std::span<const double> ratios, double delta) const;
    double log_determinant(std::span<const double> ratios, double delta) const;

    /// Explicit n x n Lambda, for checks on small problems.
    Eigen::MatrixXd dense(std::span<const double> ratios, double delta) const;

private:
    friend class GramEvaluator;

    Eigen::VectorXd v_;
    Eigen::VectorXd w_;
    std::vector<std::vector<int>> group_of_row_;
    std::vector<std::vector<int>> parent_;
    std::vector<int> n_groups_;
};

/// U' Lambda^-1 U and log|Lambda| for a fixed matrix U, re-evaluated cheaply
/// for many (ratios, delta). When the base diagonal takes few distinct values
/// the leaf Gram matrix is assembled from per-class cross products.
class GramEvaluator {
public:
    GramEvaluator(const NestedCovariance& cov, Eigen::MatrixXd U);

    /// Returns log|Lambda|; A receives U' Lambda^-1 U.
    double evaluate(std::span<const double> ratios, double delta, Eigen::MatrixXd& A) const;

private:
    const NestedCovariance& cov_;
    Eigen::MatrixXd U_;
    std::vector<int> class_of_row_;
    std::vector<double> class_v_;
    std::vector<double> class_w_;
    std::vector<Eigen::MatrixXd> class_gram_;
    mutable Eigen::VectorXd d_inv_;
    mutable std::vector<Eigen::MatrixXd> S_;
    mutable std::vector<Eigen::VectorXd> T_;
};

struct LmmOptions {
    /// Prior weights (empty means 1 for every observation).
    Eigen::VectorXd prior_weights;
    /// Optimiser coordinates (log ratios, then delta) to start from; with a
    /// warm start only one Nelder-Mead run is made.
    std::optional<std::vector<double>> warm_start;
};

struct LmmFit {
    data::ModelSpec spec;
    data::DesignMatrices design;
    Eigen::VectorXd y;
    /// Covariate of the power variance function (ones when absent).
    Eigen::VectorXd variance_covariate;
    Eigen::VectorXd prior_weights;

    /// Coefficients in the fitting basis (design.X) and on the raw scale
    /// (design.X_raw).
    Eigen::VectorXd beta;
    Eigen::VectorXd beta_raw;
    Eigen::MatrixXd cov_beta;
    Eigen::VectorXd std_errors_raw;

    VarianceComponents vc;
    std::vector<double> ratios;
    std::vector<bool> at_boundary;
    std::vector<double> optimizer_point;

    std::vector<Eigen::VectorXd> blups;
    Eigen::VectorXd fitted_marginal;
    Eigen::VectorXd fitted_conditional;

    double loglik = 0.0;
    int n_params = 0;
    bool converged = false;
    int evaluations = 0;

    double delta_or_zero() const { return vc.delta.value_or(0.0); }
};

/// Marginal Gaussian log-likelihood at (beta, vc); beta is in the fitting
/// basis of `design`. `v` is the variance covariate (ignored when vc.delta is
/// empty) and `prior_weights` may be empty.
double marginal_loglik(const data::DesignMatrices& design, const Eigen::VectorXd& y, const VarianceComponents& vc,
                       const Eigen::VectorXd& beta, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& prior_weights = Eigen::VectorXd());

/// ML fit of a Normal-family spec.
LmmFit fit_lmm(const data::LongTable& table, const data::ModelSpec& spec);

/// ML fit on a prepared design. `v` holds the variance covariate; with
/// `has_delta` false it is ignored.
LmmFit fit_lmm(const data::DesignMatrices& design, const Eigen::VectorXd& y, const Eigen::VectorXd& v,
               bool has_delta, const LmmOptions& options = {});

std::vector<Eigen::VectorXd> blup(const LmmFit& fit);

enum class FittedKind { Marginal, Conditional };
Eigen::VectorXd fitted(const LmmFit& fit, FittedKind kind);

/// Conditional residuals divided by their model standard deviation
/// sigma * v^delta / sqrt(w).
Eigen::VectorXd standardized_residuals(const LmmFit& fit);

Eigen::VectorXd response_vector(const data::LongTable& table);
Eigen::VectorXd variance_covariate(const data::LongTable& table, const data::ModelSpec& spec);

}  // namespace hierfit::lmm
