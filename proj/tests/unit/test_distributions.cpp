#include <doctest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "expect_error.hpp"
#include "hierfit/distributions.hpp"
#include "oracles.hpp"

using namespace hierfit;
using namespace hierfit::dist;
using oracle::fd_score;
using oracle::gamma_logpdf;
using oracle::integrate_positive;

namespace {

constexpr Family NO = Family::Normal;
constexpr Family GG = Family::GeneralizedGamma;

std::vector<FamilyParams> gg_grid() {
    std::vector<FamilyParams> grid;
    for (double mu : {1.0, 25.0})
        for (double sigma : {0.1, 0.3})
            for (double nu : {-1.0, 0.5, 2.0}) grid.push_back({mu, sigma, nu});
    return grid;
}

}  // namespace

TEST_CASE("normal log density at the mode") {
    CHECK(logpdf(NO, {0.0, 1.0, 1.0}, 0.0) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(logpdf(NO, {0.0, 1.0, 1.0}, 0.0) == doctest::Approx(-0.918939).epsilon(1e-6));
    CHECK(cdf(NO, {0.0, 1.0, 1.0}, 0.0) == 0.5);
    CHECK(quantile(NO, {3.0, 2.0, 1.0}, 0.5) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("GG at nu = 1 is the gamma with shape 1/sigma^2 and mean mu") {
    const FamilyParams p{2.0, 0.5, 1.0};
    const double shape = 4.0;
    boost::math::gamma_distribution<double> g(shape, 2.0 / shape);
    for (int i = 1; i <= 50; ++i) {
        const double y = 0.1 * i;
        CHECK(logpdf(GG, p, y) == doctest::Approx(gamma_logpdf(shape, 2.0, y)).epsilon(1e-10));
        CHECK(std::abs(cdf(GG, p, y) - boost::math::cdf(g, y)) < 1e-8);
    }
    const double median = boost::math::quantile(g, 0.5);
    CHECK(std::abs(cdf(GG, p, median) - 0.5) < 1e-8);
    CHECK(std::abs(quantile(GG, p, 0.5) - median) < 1e-8);
    for (double q : {0.01, 0.1, 0.9, 0.99}) CHECK(std::abs(quantile(GG, p, q) - boost::math::quantile(g, q)) < 1e-8);
    const Moments m = gg_moments(p);
    CHECK(std::abs(m.mean - 2.0) < 1e-8);
    CHECK(std::abs(m.variance - 4.0 * 0.25) < 1e-8);
}

TEST_CASE("GG density integrates to one") {
    CHECK(std::abs(integrate_positive([](double y) { return pdf(GG, {1.0, 0.3, 2.0}, y); }) - 1.0) < 1e-6);
    for (const auto& p : gg_grid()) {
        CAPTURE(p.mu);
        CAPTURE(p.sigma);
        CAPTURE(p.nu);
        CHECK(std::abs(integrate_positive([&](double y) { return pdf(GG, p, y); }) - 1.0) < 1e-6);
    }
}

TEST_CASE("cdf and quantile are inverse and monotone") {
    std::vector<std::pair<Family, FamilyParams>> cases{{NO, {0.0, 1.0, 1.0}}, {NO, {50.0, 7.0, 1.0}}};
    for (const auto& p : gg_grid()) cases.emplace_back(GG, p);
    for (const auto& [f, p] : cases) {
        double last_q = -std::numeric_limits<double>::infinity();
        double last_c = 0.0;
        for (int i = 1; i <= 99; ++i) {
            const double prob = i / 100.0;
            const double q = quantile(f, p, prob);
            CHECK(std::abs(cdf(f, p, q) - prob) < 1e-8);
            CHECK(q > last_q);
            const double c = cdf(f, p, q);
            CHECK(c >= last_c);
            CHECK(std::abs(sf(f, p, q) - (1.0 - prob)) < 1e-8);
            last_q = q;
            last_c = c;
        }
    }
}

TEST_CASE("negative nu flips the tail of the incomplete gamma") {
    const FamilyParams p{3.0, 0.2, -1.5};
    const double theta = 1.0 / (p.sigma * p.sigma * p.nu * p.nu);
    for (double y : {1.5, 3.0, 4.5}) {
        const double z = std::pow(y / p.mu, p.nu);
        CHECK(cdf(GG, p, y) == doctest::Approx(boost::math::gamma_q(theta, theta * z)).epsilon(1e-12));
    }
}

TEST_CASE("domain and parameter errors") {
    CHECK(error_kind([] { logpdf(GG, {1.0, 0.2, 1.0}, 0.0); }) == ErrorKind::DomainError);
    CHECK(error_kind([] { cdf(GG, {1.0, 0.2, 1.0}, -1.0); }) == ErrorKind::DomainError);
    CHECK(error_kind([] { quantile(NO, {0.0, 1.0, 1.0}, 1.0); }) == ErrorKind::DomainError);
    CHECK(error_kind([] { quantile(NO, {0.0, 1.0, 1.0}, 0.0); }) == ErrorKind::DomainError);
    CHECK(error_kind([] { logpdf(GG, {1.0, 0.2, 1e-5}, 1.0); }) == ErrorKind::InvalidParams);
    CHECK(error_kind([] { logpdf(GG, {-1.0, 0.2, 1.0}, 1.0); }) == ErrorKind::InvalidParams);
    CHECK(error_kind([] { logpdf(NO, {0.0, 0.0, 1.0}, 1.0); }) == ErrorKind::InvalidParams);
    std::mt19937_64 rng(1);
    CHECK(error_kind([&] { sample(GG, {1.0, -0.2, 1.0}, 3, rng); }) == ErrorKind::InvalidParams);
}

TEST_CASE("sampler moments") {
    std::mt19937_64 rng(2024);
    CHECK(sample(NO, {0.0, 1.0, 1.0}, 0, rng).empty());

    const auto x = sample(NO, {0.0, 1.0, 1.0}, 100000, rng);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= x.size();
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= x.size() - 1;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);

    const auto g = sample(GG, {2.0, 0.5, 1.0}, 100000, rng);
    double gm = 0.0;
    for (double v : g) gm += v;
    gm /= g.size();
    const double se = std::sqrt(gg_moments({2.0, 0.5, 1.0}).variance / g.size());
    CHECK(std::abs(gm - 2.0) < 4.0 * se);
}

TEST_CASE("sampler is deterministic per seed") {
    std::mt19937_64 a(9), b(9);
    CHECK(sample(GG, {5.0, 0.3, -0.7}, 50, a) == sample(GG, {5.0, 0.3, -0.7}, 50, b));
}

TEST_CASE("sampler passes KS against its own cdf") {
    std::mt19937_64 rng(77);
    std::vector<std::pair<Family, FamilyParams>> cases{{NO, {4.0, 2.0, 1.0}}};
    for (const auto& p : gg_grid()) cases.emplace_back(GG, p);
    for (const auto& [f, p] : cases) {
        const auto x = sample(f, p, 10000, rng);
        CHECK(oracle::ks_pvalue(x, [&](double y) { return cdf(f, p, y); }) > 0.001);
    }
}

TEST_CASE("exact GG moments agree with quadrature") {
    const FamilyParams p{1.0, 0.3, 2.0};
    const Moments m = gg_moments(p);
    const double m1 = integrate_positive([&](double y) { return y * pdf(GG, p, y); });
    const double m2 = integrate_positive([&](double y) { return y * y * pdf(GG, p, y); });
    CHECK(std::abs(m.mean - m1) < 1e-6);
    CHECK(std::abs(m.variance - (m2 - m1 * m1)) < 1e-6);
    for (const auto& q : gg_grid()) {
        const Moments e = gg_moments(q);
        const double a1 = integrate_positive([&](double y) { return y * pdf(GG, q, y); });
        const double a2 = integrate_positive([&](double y) { return y * y * pdf(GG, q, y); });
        CHECK(e.mean == doctest::Approx(a1).epsilon(1e-6));
        CHECK(e.variance == doctest::Approx(a2 - a1 * a1).epsilon(1e-5));
    }
}

TEST_CASE("moments are exact at nu = 1 for any mu and sigma") {
    for (double mu : {0.3, 1.0, 80.0})
        for (double sigma : {0.05, 0.5, 2.0}) {
            const Moments m = gg_moments({mu, sigma, 1.0});
            CHECK(m.mean == doctest::Approx(mu).epsilon(1e-12));
            CHECK(m.variance == doctest::Approx(mu * mu * sigma * sigma).epsilon(1e-12));
        }
}

TEST_CASE("moments undefined when a gamma argument is non-positive") {
    // theta = 1/(2^2 * 0.5^2) = 1, so theta + 2/nu = -3
    CHECK(error_kind([] { gg_moments({1.0, 2.0, -0.5}); }) == ErrorKind::MomentUndefined);
}

TEST_CASE("approximate moments claim: mean ~ mu and variance ~ mu^2 sigma^2 within 2% on the sigma <= 0.3 and |nu| <= 2 grid") {
    double worst_mean = 0.0, worst_var = 0.0;
    for (double sigma : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3})
        for (double nu : {-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0}) {
            const Moments m = gg_moments({1.0, sigma, nu});
            worst_mean = std::max(worst_mean, std::abs(m.mean - 1.0));
            worst_var = std::max(worst_var, std::abs(m.variance / (sigma * sigma) - 1.0));
        }
    CAPTURE(worst_mean);
    CAPTURE(worst_var);
    CHECK(worst_mean <= 0.02);
    CHECK(worst_var <= 0.02);
}

TEST_CASE("normal mu score is the textbook derivative") {
    const FamilyParams p{1.5, 2.0, 1.0};
    const ScoreWeight sw = score_and_weight(NO, p, 4.0, Wrt::Mu, Link::Identity);
    CHECK(sw.score == doctest::Approx((4.0 - 1.5) / 4.0).epsilon(1e-14));
    CHECK(sw.weight > 0.0);
    CHECK(error_kind([&] { score_and_weight(NO, p, 4.0, Wrt::Nu, Link::Identity); }) == ErrorKind::InvalidParams);
}

TEST_CASE("scores match finite differences on a grid") {
    struct Case {
        Family f;
        FamilyParams p;
        Wrt wrt;
        Link link;
    };
    std::vector<Case> cases;
    for (const auto& p : std::vector<FamilyParams>{{0.0, 1.0, 1.0}, {30.0, 4.0, 1.0}})
        for (Link l : {Link::Identity, Link::Log}) {
            if (p.mu > 0.0 || l == Link::Identity) cases.push_back({NO, p, Wrt::Mu, l});
            cases.push_back({NO, p, Wrt::Sigma, l});
        }
    for (const auto& p : gg_grid()) {
        for (Link l : {Link::Identity, Link::Log}) {
            cases.push_back({GG, p, Wrt::Mu, l});
            cases.push_back({GG, p, Wrt::Sigma, l});
        }
        cases.push_back({GG, p, Wrt::Nu, Link::Identity});
    }
    int checked = 0;
    for (const auto& c : cases) {
        for (double prob : {0.05, 0.2, 0.35, 0.65, 0.8, 0.95}) {
            const double y = quantile(c.f, c.p, prob);
            const ScoreWeight sw = score_and_weight(c.f, c.p, y, c.wrt, c.link);
            const double fd = fd_score(c.f, c.p, y, c.wrt, c.link);
            CAPTURE(static_cast<int>(c.f));
            CAPTURE(static_cast<int>(c.wrt));
            CAPTURE(static_cast<int>(c.link));
            CAPTURE(y);
            CHECK(std::abs(sw.score - fd) <= 1e-5 * std::abs(fd));
            CHECK(sw.weight > 0.0);
            CHECK(std::isfinite(sw.weight));
            ++checked;
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("links") {
    for (double v : {0.2, 1.0, 7.5}) {
        CHECK(inverse_link(Link::Log, link_fn(Link::Log, v)) == doctest::Approx(v).epsilon(1e-15));
        CHECK(inverse_link(Link::Identity, link_fn(Link::Identity, v)) == v);
        CHECK(dmu_deta(Link::Log, std::log(v)) == doctest::Approx(v).epsilon(1e-15));
        CHECK(dmu_deta(Link::Identity, v) == 1.0);
    }
}

TEST_CASE("quantile residuals") {
    const FamilyParams n{10.0, 2.0, 1.0};
    for (double y : {4.0, 9.0, 10.0, 13.0}) CHECK(std::abs(quantile_residual(NO, n, y) - (y - 10.0) / 2.0) < 1e-10);
    const FamilyParams g{3.0, 0.25, -0.6};
    CHECK(std::abs(quantile_residual(GG, g, quantile(GG, g, 0.5))) < 1e-10);
    // far tails are clamped
    CHECK(quantile_residual(NO, n, 1e6) == doctest::Approx(normal_quantile(1.0 - 1e-12)).epsilon(1e-6));
    CHECK(quantile_residual(NO, n, -1e6) == doctest::Approx(normal_quantile(1e-12)).epsilon(1e-9));
}

TEST_CASE("normal helpers") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_sf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(normal_sf(37.0) > 0.0);
    CHECK(normal_sf(37.0) == doctest::Approx(5.7255712225239e-300).epsilon(1e-10));
}
