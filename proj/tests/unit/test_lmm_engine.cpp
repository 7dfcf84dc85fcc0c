#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "expect_error.hpp"
#include "fixtures.hpp"
#include "hierfit/design.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/model_spec.hpp"
#include "hierfit/nelder_mead.hpp"
#include "hierfit/simulator.hpp"
#include "oracles.hpp"

using namespace hierfit;
using namespace hierfit::lmm;
using data::ModelSpec;

namespace {

const char* kFull = "height ~ block + tension*silicate*time + I(time^2) + I(time^3), random = block/plot/subplot/plant";

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> z(0.0, sd);
    Eigen::VectorXd v(n);
    for (auto& x : v) x = z(rng);
    return v;
}

Eigen::VectorXd resid_variance(const Eigen::VectorXd& v, double sigma2, double delta, const Eigen::VectorXd& w) {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = sigma2 * std::pow(v[i], 2.0 * delta) / w[i];
    return out;
}

}  // namespace

TEST_CASE("Nelder-Mead finds the minimum of a quadratic and Rosenbrock") {
    const auto quad = [](std::span<const double> x) { return (x[0] - 1.0) * (x[0] - 1.0) + 4.0 * (x[1] + 2.0) * (x[1] + 2.0); };
    const auto r = opt::nelder_mead(quad, {0.0, 0.0});
    CHECK(r.converged);
    CHECK(std::abs(r.x[0] - 1.0) < 1e-6);
    CHECK(std::abs(r.x[1] + 2.0) < 1e-6);
    const auto rosen = [](std::span<const double> x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    const auto s = opt::nelder_mead(rosen, {-1.2, 1.0});
    CHECK(std::abs(s.x[0] - 1.0) < 1e-5);
    CHECK(std::abs(s.x[1] - 1.0) < 1e-5);
    const auto zero = opt::nelder_mead([](std::span<const double>) { return 3.0; }, {});
    CHECK(zero.f == 3.0);
}

TEST_CASE("two independent standard normals at zero") {
    const auto t = fixture::layout(1, 1, 1, 1, {30.0, 45.0});
    const auto d = data::build_design(t, ModelSpec::parse("height ~ 1"));
    VarianceComponents vc;
    vc.sigma2 = 1.0;
    const double ll = marginal_loglik(d, Eigen::VectorXd::Zero(2), vc, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(2));
    CHECK(ll == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
}

TEST_CASE("zero random variances at the OLS estimate give the OLS likelihood") {
    const auto t = sim::simulate(sim::TruthSpec{}, 3);
    const auto d = data::build_design(t, ModelSpec::parse(kFull));
    const Eigen::VectorXd y = response_vector(t);
    const oracle::Ols o = oracle::ols(d.X, y);
    VarianceComponents vc;
    vc.levels = {"plot", "subplot", "plant"};
    vc.level_variances = {0.0, 0.0, 0.0};
    vc.sigma2 = o.sigma2_ml;
    const double ll = marginal_loglik(d, y, vc, o.beta, Eigen::VectorXd::Ones(y.size()));
    CHECK(std::abs(ll - o.loglik) < 1e-8 * std::abs(o.loglik));
}

TEST_CASE("marginal likelihood equals the dense oracle on tiny instances") {
    std::mt19937_64 rng(17);
    SUBCASE("two plots with two observations each") {
        const auto t = fixture::layout(1, 2, 1, 1, {30.0, 60.0});
        const auto d = data::build_design(t, ModelSpec::parse("height ~ time, random = plot"));
        const Eigen::VectorXd y = random_vector(4, rng, 3.0);
        const Eigen::VectorXd beta = random_vector(2, rng);
        VarianceComponents vc{{"plot"}, {2.5}, 1.3, std::nullopt};
        const double ll = marginal_loglik(d, y, vc, beta, Eigen::VectorXd::Ones(4));
        const Eigen::MatrixXd V = oracle::dense_covariance(d.Z_list(), {2.5}, Eigen::VectorXd::Constant(4, 1.3));
        CHECK(V.rows() == 4);
        CHECK(std::abs(ll - oracle::dense_loglik(V, y - d.X * beta)) < 1e-10);
    }
    SUBCASE("three nested levels, power variance and prior weights") {
        const auto t = fixture::layout(2, 2, 2, 2, {30.0, 45.0, 60.0});
        const auto d =
            data::build_design(t, ModelSpec::parse("height ~ tension + time, random = plot/subplot/plant"));
        const auto n = static_cast<Eigen::Index>(t.size());
        const Eigen::VectorXd y = random_vector(n, rng, 4.0);
        const Eigen::VectorXd beta = random_vector(static_cast<Eigen::Index>(d.p()), rng);
        const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(t.time().data(), n) / 45.0;
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = 0.5 + 0.1 * static_cast<double>(i % 7);
        VarianceComponents vc{{"plot", "subplot", "plant"}, {1.7, 0.0, 0.4}, 0.9, 0.8};
        const double ll = marginal_loglik(d, y, vc, beta, v, w);
        const Eigen::MatrixXd V =
            oracle::dense_covariance(d.Z_list(), vc.level_variances, resid_variance(v, 0.9, 0.8, w));
        CHECK(std::abs(ll - oracle::dense_loglik(V, y - d.X * beta)) < 1e-10);

        const NestedCovariance cov(d.levels, v, w);
        const std::vector<double> ratios{1.7 / 0.9, 0.0, 0.4 / 0.9};
        const Eigen::MatrixXd L = cov.dense(ratios, 0.8);
        CHECK((L * 0.9 - V).cwiseAbs().maxCoeff() < 1e-12);
        const Eigen::MatrixXd M = random_vector(n * 3, rng).reshaped(n, 3);
        CHECK((cov.solve(M, ratios, 0.8) - L.ldlt().solve(M)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(std::abs(cov.log_determinant(ratios, 0.8) - L.ldlt().vectorD().array().log().sum()) < 1e-10);

        const GramEvaluator gram(cov, M);
        Eigen::MatrixXd A;
        const double logdet = gram.evaluate(ratios, 0.8, A);
        CHECK(std::abs(logdet - cov.log_determinant(ratios, 0.8)) < 1e-10);
        CHECK((A - M.transpose() * L.ldlt().solve(M)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("invalid variance components are rejected") {
    const auto t = fixture::layout(1, 2, 1, 1, {30.0, 60.0});
    const auto d = data::build_design(t, ModelSpec::parse("height ~ 1, random = plot"));
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
    VarianceComponents zero{{"plot"}, {1.0}, 0.0, std::nullopt};
    CHECK(error_kind([&] { marginal_loglik(d, y, zero, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(4)); }) ==
          ErrorKind::NotPositiveDefinite);
    VarianceComponents negative{{"plot"}, {-1.0}, 1.0, std::nullopt};
    CHECK(error_kind([&] { marginal_loglik(d, y, negative, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(4)); }) ==
          ErrorKind::NotPositiveDefinite);
}

TEST_CASE("zero random variances: fitted beta is the OLS beta") {
    sim::TruthSpec truth;
    truth.sigma2_P = truth.sigma2_SP = truth.sigma2_SS = 0.0;
    truth.sigma2 = 1e-3;
    const auto t = sim::simulate(truth, 8);
    const ModelSpec spec = ModelSpec::parse(kFull);
    const LmmFit fit = fit_lmm(t, spec);
    CHECK(fit.converged);
    const oracle::Ols o = oracle::ols(fit.design.X, fit.y);
    CHECK((fit.beta - o.beta).cwiseAbs().maxCoeff() < 1e-6);
    for (double s : fit.vc.level_variances) CHECK(s <= 1e-4);
}

TEST_CASE("reported log-likelihood is the marginal likelihood at the estimates") {
    sim::TruthSpec truth;
    truth.delta = 1.0;
    truth.sigma2 = 0.004;
    const auto t = sim::simulate(truth, 21);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse(std::string(kFull) + ", varfunc = power(time)"));
    CHECK(fit.converged);
    REQUIRE(fit.vc.delta.has_value());
    CHECK(std::abs(fit.loglik - marginal_loglik(fit.design, fit.y, fit.vc, fit.beta, fit.variance_covariate)) < 1e-10);
    CHECK(fit.n_params == 37 + 3 + 1 + 1);

    const LmmFit homo = fit_lmm(t, ModelSpec::parse(kFull));
    CHECK(homo.n_params == 41);
    CHECK(std::abs(homo.loglik - marginal_loglik(homo.design, homo.y, homo.vc, homo.beta, homo.variance_covariate)) <
          1e-10);
}

TEST_CASE("fitting is deterministic") {
    const auto t = sim::simulate(sim::TruthSpec{}, 4);
    const ModelSpec spec = ModelSpec::parse(kFull);
    const LmmFit a = fit_lmm(t, spec);
    const LmmFit b = fit_lmm(t, spec);
    CHECK(a.beta == b.beta);
    CHECK(a.vc == b.vc);
    CHECK(a.loglik == b.loglik);
    CHECK(a.blups == b.blups);
    CHECK(a.fitted_conditional == b.fitted_conditional);
}

TEST_CASE("non-Normal specs are refused") {
    const auto t = sim::simulate(sim::TruthSpec{}, 4);
    CHECK(error_kind([&] { fit_lmm(t, ModelSpec::parse("height ~ time, family = GG")); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("one-way BLUPs follow the closed-form shrinkage") {
    std::mt19937_64 rng(3);
    const auto base = fixture::layout(1, 6, 1, 1, {30.0, 45.0, 60.0});
    Eigen::VectorXd y(18);
    const Eigen::VectorXd effects = random_vector(6, rng, 3.0);
    for (Eigen::Index i = 0; i < 18; ++i) y[i] = 20.0 + effects[i / 3] + std::normal_distribution<double>(0.0, 1.0)(rng);
    const auto t = fixture::with_heights(base, y);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse("height ~ 1, random = plot"));
    REQUIRE(fit.vc.level_variances[0] > 0.0);
    const double s2g = fit.vc.level_variances[0];
    const double s2 = fit.vc.sigma2;
    const double m = 3.0;
    const double grand = y.mean();
    CHECK(std::abs(fit.beta_raw[0] - grand) < 1e-10);
    const auto b = blup(fit);
    REQUIRE(b.size() == 1);
    for (Eigen::Index g = 0; g < 6; ++g) {
        const double ybar = y.segment(3 * g, 3).mean();
        CHECK(std::abs(b[0][g] - s2g * m / (s2g * m + s2) * (ybar - grand)) < 1e-10);
    }
}

TEST_CASE("a zero variance level has zero BLUPs and fitted kinds relate through them") {
    sim::TruthSpec truth;
    truth.sigma2_SP = 0.0;
    const auto t = sim::simulate(truth, 12);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse(kFull));
    const Eigen::VectorXd marginal = fitted(fit, FittedKind::Marginal);
    const Eigen::VectorXd conditional = fitted(fit, FittedKind::Conditional);
    CHECK((marginal - fit.design.X * fit.beta).cwiseAbs().maxCoeff() == 0.0);
    const auto Z = fit.design.Z_list();
    Eigen::VectorXd zb = Eigen::VectorXd::Zero(conditional.size());
    for (std::size_t l = 0; l < Z.size(); ++l) zb += Z[l] * fit.blups[l];
    CHECK((conditional - marginal - zb).cwiseAbs().maxCoeff() < 1e-10);
    for (std::size_t l = 0; l < fit.blups.size(); ++l) {
        if (fit.at_boundary[l]) {
            CHECK(fit.vc.level_variances[l] == 0.0);
            CHECK(fit.blups[l].cwiseAbs().maxCoeff() == 0.0);
        }
    }
    // conditional residuals are tighter than marginal ones
    CHECK((fit.y - conditional).squaredNorm() < (fit.y - marginal).squaredNorm());
}

TEST_CASE("all-zero variance components make both fitted kinds identical") {
    sim::TruthSpec truth;
    truth.sigma2_P = truth.sigma2_SP = truth.sigma2_SS = 0.0;
    truth.sigma2 = 1e-3;
    const auto t = sim::simulate(truth, 8);
    LmmFit fit = fit_lmm(t, ModelSpec::parse(kFull));
    if (std::all_of(fit.at_boundary.begin(), fit.at_boundary.end(), [](bool b) { return b; })) {
        CHECK(fitted(fit, FittedKind::Marginal) == fitted(fit, FittedKind::Conditional));
    }
    // forced: zero variances in the fit itself
    fit.vc.level_variances.assign(3, 0.0);
    fit.ratios.assign(3, 0.0);
    const auto b = blup(fit);
    for (const auto& v : b) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("BLUPs sum to zero within parent groups in a balanced design") {
    const auto t = sim::simulate(sim::TruthSpec{}, 31);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse(kFull));
    const auto& levels = fit.design.levels;
    REQUIRE(fit.vc.level_variances[0] > 0.0);

    // plots are grouped by block, a fixed factor
    const auto& block = t.factor("block");
    std::vector<double> by_block(block.n_levels(), 0.0);
    std::vector<int> plot_block(levels[0].n_groups(), -1);
    for (std::size_t i = 0; i < t.size(); ++i) plot_block[levels[0].group_of_row[i]] = block.codes[i];
    for (std::size_t g = 0; g < levels[0].n_groups(); ++g) by_block[plot_block[g]] += fit.blups[0][g];
    for (double s : by_block) CHECK(std::abs(s) < 1e-8);

    for (const auto& b : fit.blups) CHECK(std::abs(b.sum()) < 1e-8);

    // inside a random parent the children add up to the parent's BLUP scaled
    // by the variance ratio
    for (std::size_t l = 1; l < levels.size(); ++l) {
        std::vector<double> sum(levels[l - 1].n_groups(), 0.0);
        for (std::size_t g = 0; g < levels[l].n_groups(); ++g) sum[levels[l].parent[g]] += fit.blups[l][g];
        if (fit.vc.level_variances[l - 1] == 0.0) continue;
        const double ratio = fit.vc.level_variances[l] / fit.vc.level_variances[l - 1];
        for (std::size_t g = 0; g < sum.size(); ++g) CHECK(std::abs(sum[g] - ratio * fit.blups[l - 1][g]) < 1e-8);
    }
}

TEST_CASE("strong plot effects are recovered by the BLUPs") {
    std::mt19937_64 rng(99);
    const auto base = sim::layout(sim::DesignLayout{});
    const auto& plot = base.factor("plot");
    const Eigen::VectorXd effects = random_vector(static_cast<Eigen::Index>(plot.n_levels()), rng, 10.0);
    Eigen::VectorXd y(static_cast<Eigen::Index>(base.size()));
    for (std::size_t i = 0; i < base.size(); ++i) {
        y[static_cast<Eigen::Index>(i)] = 50.0 + 0.3 * base.time()[i] + effects[plot.codes[i]] +
                                          std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    const auto t = fixture::with_heights(base, y);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse("height ~ time, random = plot"));
    Eigen::VectorXd truth(16), predicted(16);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const int g = fit.design.levels[0].group_of_row[i];
        truth[g] = effects[t.factor("plot").codes[i]];
        predicted[g] = fit.blups[0][g];
    }
    CHECK(fixture::correlation(truth, predicted) > 0.99);
}

TEST_CASE("adding a fixed term never lowers the maximized likelihood") {
    const auto t = sim::simulate(sim::TruthSpec{}, 44);
    const char* random = ", random = block/plot/subplot/plant";
    double last = -std::numeric_limits<double>::infinity();
    for (const char* fixed : {"height ~ block", "height ~ block + time", "height ~ block + time + tension",
                              "height ~ block + time + tension + silicate",
                              "height ~ block + time*tension + silicate", "height ~ block + time*tension*silicate"}) {
        const LmmFit fit = fit_lmm(t, ModelSpec::parse(std::string(fixed) + random));
        CAPTURE(fixed);
        CHECK(fit.loglik >= last - 1e-6);
        last = fit.loglik;
    }
}

TEST_CASE("one random level: ML agrees with one-way method of moments") {
    std::mt19937_64 rng(123);
    const auto base = fixture::layout(1, 200, 1, 1, {30.0, 45.0, 60.0, 75.0, 90.0});
    Eigen::VectorXd y(1000);
    for (Eigen::Index g = 0; g < 200; ++g) {
        const double b = std::normal_distribution<double>(0.0, 2.0)(rng);
        for (Eigen::Index j = 0; j < 5; ++j) y[5 * g + j] = 10.0 + b + std::normal_distribution<double>(0.0, 1.5)(rng);
    }
    const auto t = fixture::with_heights(base, y);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse("height ~ 1, random = plot"));
    double ssw = 0.0, ssb = 0.0;
    const double grand = y.mean();
    for (Eigen::Index g = 0; g < 200; ++g) {
        const double m = y.segment(5 * g, 5).mean();
        ssb += 5.0 * (m - grand) * (m - grand);
        for (Eigen::Index j = 0; j < 5; ++j) ssw += std::pow(y[5 * g + j] - m, 2);
    }
    const double msw = ssw / (200.0 * 4.0);
    const double msb = ssb / 199.0;
    const double mom_group = (msb - msw) / 5.0;
    REQUIRE(mom_group > 0.0);
    CHECK(fit.vc.sigma2 == doctest::Approx(msw).epsilon(0.02));
    CHECK(fit.vc.level_variances[0] == doctest::Approx(mom_group).epsilon(0.05));
}

TEST_CASE("scaling the response scales the estimates") {
    sim::TruthSpec truth;
    truth.delta = 0.5;
    truth.sigma2 = 0.05;
    const auto t = sim::simulate(truth, 6);
    const ModelSpec spec = ModelSpec::parse(std::string(kFull) + ", varfunc = power(time)");
    const LmmFit a = fit_lmm(t, spec);
    const double c = 3.0;
    const auto scaled = fixture::with_heights(t, response_vector(t) * c);
    const LmmFit b = fit_lmm(scaled, spec);
    const double n = static_cast<double>(t.size());
    CHECK((b.beta - c * a.beta).cwiseAbs().maxCoeff() < 1e-5 * c * a.beta.cwiseAbs().maxCoeff());
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(std::abs(b.vc.level_variances[l] - c * c * a.vc.level_variances[l]) <=
              1e-4 * c * c * std::max(a.vc.level_variances[l], 1e-3 * a.vc.sigma2));
    }
    CHECK(b.vc.sigma2 == doctest::Approx(c * c * a.vc.sigma2).epsilon(1e-4));
    CHECK(std::abs(*b.vc.delta - *a.vc.delta) < 1e-5);
    CHECK(std::abs(b.loglik - (a.loglik - n * std::log(c))) < 1e-6);
}

TEST_CASE("power exponent is recovered") {
    sim::TruthSpec truth;
    truth.delta = 1.0;
    truth.sigma2 = 0.004;
    truth.seed = 1000;
    const auto report = sim::replicate_study(truth, 100, ModelSpec::parse(std::string(kFull) + ", varfunc = power(time)"));
    CHECK(report.failures == 0);
    const auto& d = report.at("delta");
    int inside = 0;
    for (double e : d.estimates) inside += (e >= 0.85 && e <= 1.15);
    CAPTURE(inside);
    CHECK(inside >= static_cast<int>(std::ceil(0.95 * static_cast<double>(d.estimates.size()))));
}

TEST_CASE("standardized residuals divide by the model standard deviation") {
    sim::TruthSpec truth;
    truth.delta = 1.0;
    truth.sigma2 = 0.004;
    const auto t = sim::simulate(truth, 2);
    const LmmFit fit = fit_lmm(t, ModelSpec::parse(std::string(kFull) + ", varfunc = power(time)"));
    const Eigen::VectorXd r = standardized_residuals(fit);
    for (Eigen::Index i = 0; i < r.size(); i += 97) {
        const double sd = std::sqrt(fit.vc.sigma2) * std::pow(fit.variance_covariate[i], *fit.vc.delta);
        CHECK(r[i] == doctest::Approx((fit.y[i] - fit.fitted_conditional[i]) / sd).epsilon(1e-12));
    }
}
