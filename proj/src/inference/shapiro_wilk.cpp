#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "hierfit/distributions.hpp"
#include "hierfit/error.hpp"
#include "hierfit/inference.hpp"

namespace hierfit::inference {

namespace {

// Royston (1992, 1995) polynomial approximations
constexpr double kG[2] = {-2.273, 0.459};
constexpr double kC1[6] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
constexpr double kC2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
constexpr double kC3[4] = {0.544, -0.39978, 0.025054, -6.714e-4};
constexpr double kC4[4] = {1.3822, -0.77857, 0.062767, -0.0020322};
constexpr double kC5[4] = {-1.5861, -0.31082, -0.083751, 0.0038915};
constexpr double kC6[3] = {-0.4803, -0.082676, 0.0030302};

template <std::size_t N>
double poly(const double (&c)[N], double x) {
    double out = 0.0;
    for (std::size_t j = N; j-- > 0;) out = out * x + c[j];
    return out;
}

/// Antisymmetric coefficient vector for the ordered sample, unit norm.
std::vector<double> coefficients(std::size_t n) {
    const std::size_t half = n / 2;
    std::vector<double> a(half);
    if (n == 3) {
        a[0] = std::numbers::sqrt2 / 2.0;
    } else {
        const double an25 = static_cast<double>(n) + 0.25;
        std::vector<double> m(half);
        double summ2 = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
            m[i] = dist::normal_quantile((static_cast<double>(i + 1) - 0.375) / an25);
            summ2 += m[i] * m[i];
        }
        summ2 *= 2.0;
        const double ssumm2 = std::sqrt(summ2);
        const double rsn = 1.0 / std::sqrt(static_cast<double>(n));
        const double a1 = poly(kC1, rsn) - m[0] / ssumm2;
        std::size_t first;
        double fac;
        if (n > 5) {
            const double a2 = -m[1] / ssumm2 + poly(kC2, rsn);
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[1] = a2;
            first = 2;
        } else {
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
            first = 1;
        }
        a[0] = a1;
        for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
    }
    std::vector<double> full(n, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        full[i] = -a[i];
        full[n - 1 - i] = a[i];
    }
    return full;
}

}  // namespace

ShapiroWilk shapiro_wilk(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 3) throw Error(ErrorKind::TooFew, "Shapiro-Wilk needs at least 3 observations");
    if (n > 5000) throw Error(ErrorKind::TooFew, "Shapiro-Wilk is limited to 5000 observations");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double range = s.back() - s.front();
    if (!(range > 1e-19 * std::max(1.0, std::abs(s.front())))) {
        throw Error(ErrorKind::Constant, "Shapiro-Wilk needs a non-constant sample");
    }
    const std::vector<double> a = coefficients(n);

    // W is the squared correlation of the ordered sample with the coefficients
    double mean = 0.0;
    for (double v : s) mean += v / range;
    mean /= static_cast<double>(n);
    double a_mean = 0.0;
    for (double v : a) a_mean += v;
    a_mean /= static_cast<double>(n);
    double ssa = 0.0, ssx = 0.0, sax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - a_mean;
        const double dx = s[i] / range - mean;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    const double root = std::sqrt(ssa * ssx);
    // 1 - W without cancellation
    const double w1 = (root - sax) * (root + sax) / (ssa * ssx);
    ShapiroWilk out;
    out.W = 1.0 - w1;

    if (n == 3) {
        const double pi6 = 6.0 / std::numbers::pi;
        const double stqr = std::numbers::pi / 3.0;
        out.p = std::max(0.0, pi6 * (std::asin(std::sqrt(std::min(out.W, 1.0))) - stqr));
        return out;
    }
    double y = std::log(w1);
    const double an = static_cast<double>(n);
    double m, sd;
    if (n <= 11) {
        const double gamma = poly(kG, an);
        if (y >= gamma) {
            out.p = 1e-99;
            return out;
        }
        y = -std::log(gamma - y);
        m = poly(kC3, an);
        sd = std::exp(poly(kC4, an));
    } else {
        const double xx = std::log(an);
        m = poly(kC5, xx);
        sd = std::exp(poly(kC6, xx));
    }
    out.p = dist::normal_sf((y - m) / sd);
    return out;
}

}  // namespace hierfit::inference
