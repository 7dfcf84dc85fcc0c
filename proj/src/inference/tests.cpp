#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdio>

#include "hierfit/error.hpp"
#include "hierfit/inference.hpp"

namespace hierfit::inference {

namespace {

constexpr double kNestTolerance = 1e-6;

void check_args(double x, double df) {
    if (!(x >= 0.0) || !(df > 0.0) || !std::isfinite(df)) {
        throw Error(ErrorKind::DomainError, "reference distribution needs x >= 0 and df > 0");
    }
}

}  // namespace

double chisq_sf(double x, double df) {
    check_args(x, df);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double f_sf(double x, double df1, double df2) {
    check_args(x, df1);
    check_args(0.0, df2);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    // P(F > x) = I_{df2/(df2 + df1 x)}(df2/2, df1/2)
    return boost::math::ibeta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * x));
}

ModelSummary summary(const lmm::LmmFit& fit) { return {fit.loglik, fit.n_params}; }
ModelSummary summary(const gamlss::GamlssFit& fit) { return {fit.loglik, fit.n_params}; }

double aic(double loglik, int n_params) { return -2.0 * loglik + 2.0 * static_cast<double>(n_params); }
double aic(const ModelSummary& fit) { return aic(fit.loglik, fit.n_params); }

LrtResult lrt(const ModelSummary& fit0, const ModelSummary& fit1) {
    LrtResult r;
    r.loglik0 = fit0.loglik;
    r.df0 = fit0.n_params;
    r.loglik1 = fit1.loglik;
    r.df1 = fit1.n_params;
    if (fit0.n_params == fit1.n_params && fit0.loglik == fit1.loglik) return r;
    if (fit0.n_params >= fit1.n_params) {
        throw Error(ErrorKind::NotNested, "model 1 must have more parameters than model 0 (" +
                                              std::to_string(fit0.n_params) + " vs " + std::to_string(fit1.n_params) + ")");
    }
    if (fit1.loglik < fit0.loglik - kNestTolerance) {
        throw Error(ErrorKind::NotNested, "the larger model has a lower log-likelihood");
    }
    r.delta_df = fit1.n_params - fit0.n_params;
    r.statistic = std::max(0.0, 2.0 * (fit1.loglik - fit0.loglik));
    r.p = chisq_sf(r.statistic, r.delta_df);
    return r;
}

std::string LrtResult::to_text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-8s %5s %12s %12s %10s %8s\n"
                  "%-8s %5d %12.2f %12.2f %10s %8s\n"
                  "%-8s %5d %12.2f %12.2f %10.2f %8.4f\n",
                  "Model", "df", "logLik", "AIC", "LRT", "p-value", "fit0", df0, loglik0, aic(loglik0, df0), "", "",
                  "fit1", df1, loglik1, aic(loglik1, df1), statistic, p);
    return buf;
}

}  // namespace hierfit::inference
