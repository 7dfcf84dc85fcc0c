#pragma once

#include <Eigen/Dense>
#include <string_view>
#include <vector>

#include "hierfit/distributions.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/model_spec.hpp"
#include "hierfit/table.hpp"

namespace hierfit::gamlss {

struct GamlssFit {
    Family family = Family::Normal;
    LinkSet links;
    data::ModelSpec spec;

    /// Weighted mixed model of the final mu-step (working response, PQL
    /// weights). Its design and variance components drive the F-tests.
    lmm::LmmFit working;

    Eigen::VectorXd mu_beta;
    Eigen::VectorXd mu_beta_raw;
    Eigen::VectorXd std_errors_raw;
    std::vector<Eigen::VectorXd> mu_blups;
    /// Conditional linear predictor and mean (random effects included).
    Eigen::VectorXd eta;
    Eigen::VectorXd mu;

    double sigma_eta = 0.0;
    double nu_eta = 1.0;

    double global_deviance = 0.0;
    std::vector<double> deviance_history;
    double loglik = 0.0;
    int n_params = 0;
    bool converged = false;
    int iterations = 0;

    double sigma() const;
    double nu() const;
    dist::FamilyParams params(Eigen::Index i) const;
};

struct GamlssOptions {
    int max_outer = 200;
    double tolerance = 1e-6;
    /// Start from a previous fit of the same data and spec.
    const GamlssFit* warm_start = nullptr;
};

/// Penalized quasi-likelihood fit: mu carries the fixed terms and nested
/// random intercepts, sigma and nu are constants on their link scales.
GamlssFit fit_gamlss(const data::LongTable& table, const data::ModelSpec& spec, const GamlssOptions& options = {});

/// Normalized quantile residuals at the conditional (random effects
/// included) fitted values.
Eigen::VectorXd quantile_residuals(const GamlssFit& fit, const data::LongTable& table);

/// Random-effect predictions of one level, matched by name or path label.
Eigen::VectorXd extract_ranef(const GamlssFit& fit, std::string_view level);

}  // namespace hierfit::gamlss
