#pragma once

#include <span>
#include <string>
#include <vector>

#include "hierfit/gamlss.hpp"
#include "hierfit/lmm.hpp"

namespace hierfit::inference {

struct AnovaRow {
    std::string term;
    std::string stratum;
    int num_df = 0;
    int den_df = 0;
    double F = 0.0;
    double p = 1.0;
};

struct AnovaTable {
    std::vector<AnovaRow> rows;

    std::string to_text() const;
};

/// Sequential (type I) conditional F-tests in spec term order; the intercept
/// row is omitted. Numerator sums of squares come from the Cholesky
/// decomposition of the GLS normal equations. Each term is referred to the
/// residual mean square of the stratum it is estimated in: the outermost
/// random level within whose groups all of its columns are constant, or the
/// observation-level residual otherwise. Denominator df of stratum s is
/// m_s - m_(s-1) - p_s.
AnovaTable sequential_f(const lmm::LmmFit& fit);
AnovaTable sequential_f(const gamlss::GamlssFit& fit);

struct ModelSummary {
    double loglik = 0.0;
    int n_params = 0;
};

ModelSummary summary(const lmm::LmmFit& fit);
ModelSummary summary(const gamlss::GamlssFit& fit);

struct LrtResult {
    double loglik0 = 0.0;
    int df0 = 0;
    double loglik1 = 0.0;
    int df1 = 0;
    double statistic = 0.0;
    int delta_df = 0;
    double p = 1.0;

    std::string to_text() const;
};

/// Likelihood-ratio test of model 0 nested in model 1. Two fits with equal
/// df and equal log-likelihood are treated as identical (statistic 0, p 1).
LrtResult lrt(const ModelSummary& fit0, const ModelSummary& fit1);

double aic(double loglik, int n_params);
double aic(const ModelSummary& fit);

double chisq_sf(double x, double df);
double f_sf(double x, double df1, double df2);

struct ShapiroWilk {
    double W = 1.0;
    double p = 1.0;
};

/// Royston's algorithm, valid for 3 <= n <= 5000.
ShapiroWilk shapiro_wilk(std::span<const double> x);

}  // namespace hierfit::inference
