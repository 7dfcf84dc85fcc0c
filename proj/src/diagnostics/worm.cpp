#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "hierfit/diagnostics.hpp"
#include "hierfit/distributions.hpp"
#include "hierfit/error.hpp"

namespace hierfit::diagnostics {

namespace {

constexpr std::size_t kMinPanel = 10;
constexpr double kBandZ = 1.96;

}  // namespace

MisfitFlags classify(const Cubic& c) {
    MisfitFlags f;
    f.mean_misfit = std::abs(c.b0) > 0.1;
    f.variance_misfit = std::abs(c.b1) > 0.1;
    f.skewness_misfit = std::abs(c.b2) > 0.05;
    f.kurtosis_misfit = std::abs(c.b3) > 0.03;
    return f;
}

WormPanel worm_panel(std::span<const double> residuals) {
    const std::size_t n = residuals.size();
    if (n < kMinPanel) throw Error(ErrorKind::TooFew, "a worm plot needs at least 10 residuals");
    std::vector<double> r(residuals.begin(), residuals.end());
    std::sort(r.begin(), r.end());
    WormPanel panel;
    panel.x.resize(n);
    panel.y.resize(n);
    panel.band.resize(n);
    const double nd = static_cast<double>(n);
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(n), 4);
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / nd;
        const double x = dist::normal_quantile(p);
        panel.x[i] = x;
        panel.y[i] = r[i] - x;
        panel.band[i] = kBandZ * std::sqrt(p * (1.0 - p) / nd) / dist::normal_pdf(x);
        const auto row = static_cast<Eigen::Index>(i);
        basis(row, 0) = 1.0;
        basis(row, 1) = x;
        basis(row, 2) = x * x;
        basis(row, 3) = x * x * x;
        target[row] = panel.y[i];
    }
    const Eigen::VectorXd b = basis.colPivHouseholderQr().solve(target);
    panel.cubic = {b[0], b[1], b[2], b[3]};
    panel.flags = classify(panel.cubic);
    return panel;
}

std::vector<WormPanel> worm_panels_by(std::span<const double> residuals, std::span<const double> covariate,
                                      std::size_t k, const std::string& covariate_name) {
    const std::size_t n = residuals.size();
    if (covariate.size() != n) throw Error(ErrorKind::InvalidParams, "covariate length differs from residuals");
    if (k == 0) throw Error(ErrorKind::TooManyPanels, "at least one panel is required");
    if (k == 1) return {worm_panel(residuals)};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return covariate[a] < covariate[b]; });
    std::size_t distinct = n ? 1 : 0;
    for (std::size_t i = 1; i < n; ++i) distinct += covariate[order[i]] != covariate[order[i - 1]];
    if (k * kMinPanel > n) {
        throw Error(ErrorKind::TooManyPanels, std::to_string(k) + " panels leave fewer than 10 residuals per panel");
    }
    if (k > distinct) {
        throw Error(ErrorKind::TooManyPanels, std::to_string(k) + " panels exceed the " + std::to_string(distinct) +
                                                  " distinct covariate values");
    }

    std::vector<WormPanel> panels;
    std::size_t start = 0;
    for (std::size_t j = 1; j <= k; ++j) {
        if (start >= n) throw Error(ErrorKind::TooManyPanels, "ties leave too few groups for " + std::to_string(k) + " panels");
        std::size_t end = j == k ? n : std::max(start + 1, (j * n + k / 2) / k);
        while (end < n && covariate[order[end]] == covariate[order[end - 1]]) ++end;
        std::vector<double> r;
        for (std::size_t i = start; i < end; ++i) r.push_back(residuals[order[i]]);
        if (r.size() < kMinPanel) throw Error(ErrorKind::TooFew, "panel " + std::to_string(j) + " has fewer than 10 residuals");
        WormPanel panel = worm_panel(r);
        panel.interval = {false, covariate_name, covariate[order[start]], covariate[order[end - 1]]};
        panels.push_back(std::move(panel));
        start = end;
    }
    return panels;
}

}  // namespace hierfit::diagnostics
