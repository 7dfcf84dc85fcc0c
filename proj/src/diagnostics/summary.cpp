#include <algorithm>
#include <cmath>
#include <numbers>

#include "hierfit/diagnostics.hpp"
#include "hierfit/distributions.hpp"
#include "hierfit/error.hpp"

namespace hierfit::diagnostics {

namespace {

double quantile_sorted(const std::vector<double>& s, double p) {
    const double h = (static_cast<double>(s.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

Series kernel_density(std::span<const double> values, std::size_t points) {
    const std::size_t n = values.size();
    if (n < 2) throw Error(ErrorKind::TooFew, "a density estimate needs at least 2 values");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    if (!(s.back() > s.front())) throw Error(ErrorKind::Constant, "residuals are constant; no density to estimate");
    const double nd = static_cast<double>(n);
    double mean = 0.0;
    for (double v : s) mean += v / nd;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (nd - 1.0));
    const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = sd;
    const double h = 0.9 * spread * std::pow(nd, -0.2);

    Series out;
    const double lo = s.front() - 3.0 * h;
    const double hi = s.back() + 3.0 * h;
    const double norm = 1.0 / (nd * h * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t j = 0; j < points; ++j) {
        const double x = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(points - 1);
        double d = 0.0;
        for (double v : s) {
            const double u = (x - v) / h;
            d += std::exp(-0.5 * u * u);
        }
        out.x.push_back(x);
        out.y.push_back(d * norm);
    }
    return out;
}

ResidualSummary residual_summary(std::span<const double> residuals, std::span<const double> fitted,
                                 std::span<const double> covariate) {
    const std::size_t n = residuals.size();
    if (fitted.size() != n || covariate.size() != n) {
        throw Error(ErrorKind::InvalidParams, "residuals, fitted values and covariate differ in length");
    }
    ResidualSummary out;
    out.density = kernel_density(residuals);
    out.vs_fitted.x.assign(fitted.begin(), fitted.end());
    out.vs_fitted.y.assign(residuals.begin(), residuals.end());
    out.vs_covariate.x.assign(covariate.begin(), covariate.end());
    out.vs_covariate.y.assign(residuals.begin(), residuals.end());
    std::vector<double> sorted(residuals.begin(), residuals.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
        out.qq.x.push_back(dist::normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n)));
        out.qq.y.push_back(sorted[i]);
    }
    return out;
}

ResidualSummary residual_summary(const lmm::LmmFit& fit, const data::LongTable& table) {
    if (!fit.converged) throw Error(ErrorKind::NotConverged, "residual summary needs a converged fit");
    const Eigen::VectorXd r = lmm::standardized_residuals(fit);
    const Eigen::VectorXd& f = fit.fitted_conditional;
    return residual_summary(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())),
                            std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), table.time());
}

ResidualSummary residual_summary(const gamlss::GamlssFit& fit, const data::LongTable& table) {
    if (!fit.converged) throw Error(ErrorKind::NotConverged, "residual summary needs a converged fit");
    const Eigen::VectorXd r = gamlss::quantile_residuals(fit, table);
    return residual_summary(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())),
                            std::span<const double>(fit.mu.data(), static_cast<std::size_t>(fit.mu.size())), table.time());
}

}  // namespace hierfit::diagnostics
