#include <boost/math/tools/minima.hpp>
#include <algorithm>
#include <cmath>
#include <limits>

#include "hierfit/error.hpp"
#include "hierfit/gamlss.hpp"

namespace hierfit::gamlss {

namespace {

constexpr double kMinWeight = 1e-12;
constexpr double kResponseFloor = 1e-8;
constexpr int kMaxHalvings = 10;
constexpr double kInf = std::numeric_limits<double>::infinity();
// past this the power transform loses all precision
constexpr double kMaxAbsNu = 25.0;

struct State {
    Eigen::VectorXd beta;
    std::vector<Eigen::VectorXd> blups;
    Eigen::VectorXd eta;
    double sigma_eta = 0.0;
    double nu_eta = 1.0;
};

class Deviance {
public:
    Deviance(Family family, LinkSet links, const Eigen::VectorXd& y) : family_(family), links_(links), y_(y) {}

    double operator()(const Eigen::VectorXd& eta, double sigma_eta, double nu_eta) const {
        dist::FamilyParams p;
        p.sigma = dist::inverse_link(links_.sigma, sigma_eta);
        p.nu = dist::inverse_link(links_.nu, nu_eta);
        if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) return kInf;
        if (family_ == Family::GeneralizedGamma && !(std::abs(p.nu) >= dist::kMinAbsNu && std::abs(p.nu) <= kMaxAbsNu)) return kInf;
        double gd = 0.0;
        for (Eigen::Index i = 0; i < y_.size(); ++i) {
            p.mu = dist::inverse_link(links_.mu, eta[i]);
            if (!std::isfinite(p.mu) || (family_ == Family::GeneralizedGamma && !(p.mu > 0.0))) return kInf;
            gd -= 2.0 * dist::logpdf(family_, p, y_[i]);
        }
        return std::isfinite(gd) ? gd : kInf;
    }

    /// Sum of scores for sigma or nu on the link scale.
    double score(const Eigen::VectorXd& eta, double sigma_eta, double nu_eta, dist::Wrt wrt) const {
        dist::FamilyParams p;
        p.sigma = dist::inverse_link(links_.sigma, sigma_eta);
        p.nu = dist::inverse_link(links_.nu, nu_eta);
        const Link link = wrt == dist::Wrt::Sigma ? links_.sigma : links_.nu;
        double s = 0.0;
        for (Eigen::Index i = 0; i < y_.size(); ++i) {
            p.mu = dist::inverse_link(links_.mu, eta[i]);
            s += dist::score_and_weight(family_, p, y_[i], wrt, link).score;
        }
        return s;
    }

private:
    Family family_;
    LinkSet links_;
    const Eigen::VectorXd& y_;
};

/// One-dimensional update of a constant link-scale parameter: Brent on a
/// bracket around the current value, then Newton steps on the summed score.
/// A candidate is kept only if it lowers the deviance.
double update_scalar(const Deviance& dev, State& s, dist::Wrt wrt, Link link, double current_gd) {
    double& target = wrt == dist::Wrt::Sigma ? s.sigma_eta : s.nu_eta;
    auto gd_at = [&](double value) {
        return wrt == dist::Wrt::Sigma ? dev(s.eta, value, s.nu_eta) : dev(s.eta, s.sigma_eta, value);
    };
    double lo, hi;
    if (wrt == dist::Wrt::Sigma && link == Link::Identity) {
        lo = target / 20.0;
        hi = target * 20.0;
    } else if (wrt == dist::Wrt::Sigma) {
        lo = target - 3.0;
        hi = target + 3.0;
    } else {
        lo = target - 2.0;
        hi = target + 2.0;
    }
    boost::uintmax_t iters = 200;
    const auto [x, fx] = boost::math::tools::brent_find_minima(gd_at, lo, hi, 30, iters);
    double best = current_gd;
    if (fx < best) {
        target = x;
        best = fx;
    }
    for (int k = 0; k < 8; ++k) {
        const double h = 1e-5 * std::max(1.0, std::abs(target));
        auto score_at = [&](double value) {
            return wrt == dist::Wrt::Sigma ? dev.score(s.eta, value, s.nu_eta, wrt) : dev.score(s.eta, s.sigma_eta, value, wrt);
        };
        const double g = score_at(target);
        const double dg = (score_at(target + h) - score_at(target - h)) / (2.0 * h);
        if (!(dg < 0.0) || !std::isfinite(g)) break;
        const double next = target - std::clamp(g / dg, -0.5, 0.5);
        const double gd = gd_at(next);
        if (!(gd <= best)) break;
        const double moved = std::abs(next - target);
        target = next;
        best = gd;
        if (moved < 1e-14 * std::max(1.0, std::abs(target))) break;
    }
    return best;
}

void working_response(Family family, LinkSet links, const Eigen::VectorXd& y, const State& s, Eigen::VectorXd& z,
                      Eigen::VectorXd& w, Eigen::VectorXd* log_jacobian) {
    dist::FamilyParams p;
    p.sigma = dist::inverse_link(links.sigma, s.sigma_eta);
    p.nu = dist::inverse_link(links.nu, s.nu_eta);
    z.resize(y.size());
    w.resize(y.size());
    if (log_jacobian) log_jacobian->resize(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        p.mu = dist::inverse_link(links.mu, s.eta[i]);
        const dist::ScoreWeight sw = dist::score_and_weight(family, p, y[i], dist::Wrt::Mu, links.mu);
        if (!(sw.weight >= kMinWeight) || !std::isfinite(sw.weight)) {
            throw Error(ErrorKind::DivergedWeights, "working weight fell below 1e-12 at observation " + std::to_string(i));
        }
        z[i] = s.eta[i] + sw.score / sw.weight;
        w[i] = sw.weight;
        if (log_jacobian) (*log_jacobian)[i] = std::log(std::abs(dist::mu_score_dy(family, p, y[i], links.mu) / sw.weight));
    }
}

}  // namespace

double GamlssFit::sigma() const { return dist::inverse_link(links.sigma, sigma_eta); }
double GamlssFit::nu() const { return family == Family::GeneralizedGamma ? dist::inverse_link(links.nu, nu_eta) : 1.0; }

dist::FamilyParams GamlssFit::params(Eigen::Index i) const { return {mu[i], sigma(), nu()}; }

GamlssFit fit_gamlss(const data::LongTable& table, const data::ModelSpec& spec, const GamlssOptions& options) {
    spec.validate();
    if (spec.power_covariate) {
        throw Error(ErrorKind::InvalidSpec, "the GAMLSS engine keeps sigma constant; drop the variance function");
    }
    const Family family = spec.family;
    const LinkSet links = spec.links;
    const data::DesignMatrices design = data::build_design(table, spec);
    const Eigen::VectorXd y = lmm::response_vector(table);
    const auto n = y.size();
    if (family == Family::GeneralizedGamma) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(y[i] > 0.0)) {
                throw Error(ErrorKind::DomainError, "GG response must be > 0; row " + std::to_string(i + 1) +
                                                        " has " + std::to_string(y[i]));
            }
        }
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Deviance deviance(family, links, y);

    State s;
    std::optional<std::vector<double>> point;
    if (options.warm_start) {
        const GamlssFit& w = *options.warm_start;
        s.eta = w.eta;
        s.beta = w.mu_beta;
        s.blups = w.mu_blups;
        s.sigma_eta = w.sigma_eta;
        s.nu_eta = w.nu_eta;
        point = w.working.optimizer_point;
    } else {
        const double mean = y.mean();
        const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(n - 1));
        s.eta.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            s.eta[i] = dist::link_fn(links.mu, family == Family::GeneralizedGamma ? std::max(y[i], kResponseFloor) : y[i]);
        }
        const double sigma0 = family == Family::GeneralizedGamma ? sd / mean : sd;
        s.sigma_eta = dist::link_fn(links.sigma, sigma0 > 0.0 ? sigma0 : 1.0);
        s.nu_eta = dist::link_fn(links.nu, 1.0);
    }

    GamlssFit fit;
    fit.family = family;
    fit.links = links;
    fit.spec = spec;

    Eigen::VectorXd z, w, log_jac;
    double gd = options.warm_start ? deviance(s.eta, s.sigma_eta, s.nu_eta) : kInf;
    double cycle_start = gd;
    for (int it = 1; it <= options.max_outer; ++it) {
        fit.iterations = it;

        working_response(family, links, y, s, z, w, &log_jac);
        lmm::LmmOptions lo;
        lo.prior_weights = w;
        lo.warm_start = point;
        lmm::LmmFit work = lmm::fit_lmm(design, z, ones, false, lo);
        point = work.optimizer_point;

        State next = s;
        next.beta = work.beta;
        next.blups = work.blups;
        next.eta = work.fitted_conditional;
        double gd_next = deviance(next.eta, next.sigma_eta, next.nu_eta);
        if (std::isfinite(gd) && s.beta.size() == next.beta.size() && gd_next > gd + options.tolerance) {
            // shorten the step along the line between the two predictors
            double step = 1.0;
            for (int h = 0; h < kMaxHalvings && gd_next > gd; ++h) {
                step *= 0.5;
                next.beta = s.beta + step * (work.beta - s.beta);
                for (std::size_t l = 0; l < next.blups.size(); ++l) {
                    next.blups[l] = s.blups[l] + step * (work.blups[l] - s.blups[l]);
                }
                next.eta = s.eta + step * (work.fitted_conditional - s.eta);
                gd_next = deviance(next.eta, next.sigma_eta, next.nu_eta);
            }
            if (gd_next > gd) {
                // no descent left along the PQL direction; keep the working
                // fit the current BLUPs came from
                if (fit.working.beta.size() == 0) fit.working = std::move(work);
                fit.converged = true;
                break;
            }
        }
        if (!std::isfinite(gd_next)) {
            throw Error(ErrorKind::NonConvergence, "mu-step produced an invalid mean");
        }
        s = std::move(next);
        gd = gd_next;
        fit.working = std::move(work);

        gd = update_scalar(deviance, s, dist::Wrt::Sigma, links.sigma, gd);
        if (family == Family::GeneralizedGamma) gd = update_scalar(deviance, s, dist::Wrt::Nu, links.nu, gd);
        fit.deviance_history.push_back(gd);

        if (std::isfinite(cycle_start) && std::abs(cycle_start - gd) < options.tolerance) {
            fit.converged = true;
            break;
        }
        cycle_start = gd;
    }

    fit.mu_beta = s.beta;
    fit.mu_blups = s.blups;
    fit.eta = s.eta;
    fit.mu.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) fit.mu[i] = dist::inverse_link(links.mu, s.eta[i]);
    fit.sigma_eta = s.sigma_eta;
    fit.nu_eta = family == Family::GeneralizedGamma ? s.nu_eta : dist::link_fn(links.nu, 1.0);
    fit.mu_beta_raw = design.basis_to_raw * fit.mu_beta;
    fit.std_errors_raw = fit.working.std_errors_raw;
    fit.global_deviance = deviance(s.eta, s.sigma_eta, s.nu_eta);
    fit.loglik = fit.working.loglik + log_jac.sum();
    const std::size_t L = design.levels.size();
    fit.n_params = static_cast<int>(design.p() + L + 1 + (family == Family::GeneralizedGamma ? 1 : 0));
    fit.converged = fit.converged && fit.working.converged && std::isfinite(fit.loglik);
    fit.working.spec = spec;
    return fit;
}

Eigen::VectorXd quantile_residuals(const GamlssFit& fit, const data::LongTable& table) {
    const Eigen::VectorXd y = lmm::response_vector(table);
    if (y.size() != fit.mu.size()) {
        throw Error(ErrorKind::InvalidParams, "table does not match the fitted observations");
    }
    Eigen::VectorXd r(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) r[i] = dist::quantile_residual(fit.family, fit.params(i), y[i]);
    return r;
}

Eigen::VectorXd extract_ranef(const GamlssFit& fit, std::string_view level) {
    const auto& levels = fit.working.design.levels;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (levels[l].name == level || levels[l].path_label == level) return fit.mu_blups[l];
    }
    throw Error(ErrorKind::UnknownLevel, "no random level named '" + std::string(level) + "'");
}

}  // namespace hierfit::gamlss
