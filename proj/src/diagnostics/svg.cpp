#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "hierfit/diagnostics.hpp"

namespace hierfit::diagnostics {

namespace {

constexpr double kPanel = 260.0;
constexpr double kMargin = 30.0;
constexpr double kXRange = 4.0;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string worm_svg(const std::vector<WormPanel>& panels) {
    const std::size_t k = std::max<std::size_t>(panels.size(), 1);
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
    const std::size_t rows = (k + cols - 1) / cols;
    double y_range = 1.0;
    for (const auto& p : panels) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            y_range = std::max(y_range, std::min(3.0, std::abs(p.y[i]) * 1.1));
        }
    }
    const double width = static_cast<double>(cols) * (kPanel + kMargin) + kMargin;
    const double height = static_cast<double>(rows) * (kPanel + kMargin) + kMargin;

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" + fmt(height) +
                      "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t idx = 0; idx < panels.size(); ++idx) {
        const auto& p = panels[idx];
        const std::size_t row_from_bottom = idx / cols;
        const std::size_t col = idx % cols;
        const double left = kMargin + static_cast<double>(col) * (kPanel + kMargin);
        const double top = kMargin + static_cast<double>(rows - 1 - row_from_bottom) * (kPanel + kMargin);
        auto px = [&](double x) { return left + (x + kXRange) / (2.0 * kXRange) * kPanel; };
        auto py = [&](double y) { return top + (y_range - y) / (2.0 * y_range) * kPanel; };
        auto inside = [&](double x) { return std::abs(x) <= kXRange; };

        svg += "<g>\n<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(kPanel) + "\" height=\"" +
               fmt(kPanel) + "\" fill=\"none\" stroke=\"black\"/>\n";
        svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(py(0.0)) + "\" x2=\"" + fmt(left + kPanel) + "\" y2=\"" +
               fmt(py(0.0)) + "\" stroke=\"grey\" stroke-dasharray=\"3,3\"/>\n";
        std::string title = p.interval.whole_sample
                                ? std::string("all residuals")
                                : p.interval.covariate + " " + fmt(p.interval.lo) + " to " + fmt(p.interval.hi);
        svg += "<text x=\"" + fmt(left + 4) + "\" y=\"" + fmt(top - 6) + "\">" + title + "</text>\n";

        for (int sign : {-1, 1}) {
            std::string pts;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!inside(p.x[i])) continue;
                const double b = std::clamp(sign * p.band[i], -y_range, y_range);
                pts += fmt(px(p.x[i])) + "," + fmt(py(b)) + " ";
            }
            svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"steelblue\"/>\n";
        }
        std::string curve;
        for (int j = 0; j <= 80; ++j) {
            const double x = -kXRange + 2.0 * kXRange * j / 80.0;
            const double y = p.cubic.b0 + x * (p.cubic.b1 + x * (p.cubic.b2 + x * p.cubic.b3));
            curve += fmt(px(x)) + "," + fmt(py(std::clamp(y, -y_range, y_range))) + " ";
        }
        svg += "<polyline points=\"" + curve + "\" fill=\"none\" stroke=\"firebrick\"/>\n";
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!inside(p.x[i]) || std::abs(p.y[i]) > y_range) continue;
            svg += "<circle cx=\"" + fmt(px(p.x[i])) + "\" cy=\"" + fmt(py(p.y[i])) + "\" r=\"1.5\"/>\n";
        }
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace hierfit::diagnostics
