#pragma once

#include <span>
#include <string>
#include <vector>

#include "hierfit/gamlss.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/table.hpp"

namespace hierfit::diagnostics {

struct Cubic {
    double b0 = 0.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
};

struct MisfitFlags {
    bool mean_misfit = false;
    bool variance_misfit = false;
    bool skewness_misfit = false;
    bool kurtosis_misfit = false;

    bool any() const { return mean_misfit || variance_misfit || skewness_misfit || kurtosis_misfit; }
    bool operator==(const MisfitFlags&) const = default;
};

/// Thresholds 0.1, 0.1, 0.05, 0.03 on |b0|..|b3|.
MisfitFlags classify(const Cubic& cubic);

struct Interval {
    bool whole_sample = true;
    std::string covariate;
    double lo = 0.0;
    double hi = 0.0;
};

/// Detrended normal QQ plot of one group of residuals.
struct WormPanel {
    Interval interval;
    std::vector<double> x;     // theoretical quantiles, increasing
    std::vector<double> y;     // ordered residual minus x
    std::vector<double> band;  // pointwise 95% half-width at x
    Cubic cubic;
    MisfitFlags flags;

    std::size_t size() const { return x.size(); }
};

WormPanel worm_panel(std::span<const double> residuals);

/// k panels of (near-)equal counts in covariate order; tied covariate values
/// always share a panel.
std::vector<WormPanel> worm_panels_by(std::span<const double> residuals, std::span<const double> covariate,
                                      std::size_t k, const std::string& covariate_name = "x");

struct Series {
    std::vector<double> x;
    std::vector<double> y;
};

struct ResidualSummary {
    Series vs_fitted;
    Series vs_covariate;
    Series density;
    Series qq;
};

/// Gaussian kernel density on an even grid, Silverman bandwidth.
Series kernel_density(std::span<const double> values, std::size_t points = 512);

ResidualSummary residual_summary(std::span<const double> residuals, std::span<const double> fitted,
                                 std::span<const double> covariate);
ResidualSummary residual_summary(const lmm::LmmFit& fit, const data::LongTable& table);
ResidualSummary residual_summary(const gamlss::GamlssFit& fit, const data::LongTable& table);

/// Multi-panel SVG; the first panel sits bottom-left and panels fill rows
/// upwards.
std::string worm_svg(const std::vector<WormPanel>& panels);

}  // namespace hierfit::diagnostics
