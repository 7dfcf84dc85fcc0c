#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "hierfit/distributions.hpp"
#include "hierfit/error.hpp"

namespace hierfit::dist {

namespace bm = boost::math;

namespace {

constexpr double kResidualClamp = 1e-12;

double theta_of(const FamilyParams& p) { return 1.0 / (p.sigma * p.sigma * p.nu * p.nu); }

void require_support(Family family, double y) {
    if (!std::isfinite(y)) throw Error(ErrorKind::DomainError, "non-finite observation");
    if (family == Family::GeneralizedGamma && y <= 0.0) {
        throw Error(ErrorKind::DomainError, "GG response must be > 0, got " + std::to_string(y));
    }
}

}  // namespace

void validate(Family family, const FamilyParams& params) {
    if (!(params.sigma > 0.0) || !std::isfinite(params.sigma) || !std::isfinite(params.mu)) {
        throw Error(ErrorKind::InvalidParams, "sigma must be finite and > 0, mu finite");
    }
    if (family == Family::GeneralizedGamma) {
        if (!(params.mu > 0.0)) throw Error(ErrorKind::InvalidParams, "GG mu must be > 0");
        if (!std::isfinite(params.nu) || std::abs(params.nu) < kMinAbsNu) {
            throw Error(ErrorKind::InvalidParams, "GG nu must satisfy |nu| >= 1e-4");
        }
    }
}

double normal_cdf(double x) { return 0.5 * bm::erfc(-x / std::numbers::sqrt2); }
double normal_sf(double x) { return 0.5 * bm::erfc(x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::DomainError, "probability must lie in (0, 1)");
    return -std::numbers::sqrt2 * bm::erfc_inv(2.0 * p);
}

double logpdf(Family family, const FamilyParams& params, double y) {
    validate(family, params);
    require_support(family, y);
    if (family == Family::Normal) {
        const double r = (y - params.mu) / params.sigma;
        return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(params.sigma) - 0.5 * r * r;
    }
    const double theta = theta_of(params);
    const double log_z = params.nu * std::log(y / params.mu);
    const double z = std::exp(log_z);
    return std::log(std::abs(params.nu)) + theta * std::log(theta) + theta * log_z - theta * z -
           std::lgamma(theta) - std::log(y);
}

double pdf(Family family, const FamilyParams& params, double y) {
    if (family == Family::GeneralizedGamma && y <= 0.0) {
        validate(family, params);
        return 0.0;
    }
    return std::exp(logpdf(family, params, y));
}

double cdf(Family family, const FamilyParams& params, double y) {
    validate(family, params);
    if (family == Family::Normal) {
        require_support(family, y);
        return normal_cdf((y - params.mu) / params.sigma);
    }
    require_support(family, y);
    const double theta = theta_of(params);
    const double tz = theta * std::pow(y / params.mu, params.nu);
    return params.nu > 0.0 ? bm::gamma_p(theta, tz) : bm::gamma_q(theta, tz);
}

double sf(Family family, const FamilyParams& params, double y) {
    validate(family, params);
    require_support(family, y);
    if (family == Family::Normal) return normal_sf((y - params.mu) / params.sigma);
    const double theta = theta_of(params);
    const double tz = theta * std::pow(y / params.mu, params.nu);
    return params.nu > 0.0 ? bm::gamma_q(theta, tz) : bm::gamma_p(theta, tz);
}

double quantile(Family family, const FamilyParams& params, double p) {
    validate(family, params);
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::DomainError, "probability must lie in (0, 1)");
    if (family == Family::Normal) return params.mu + params.sigma * normal_quantile(p);
    const double theta = theta_of(params);
    const double tz = params.nu > 0.0 ? bm::gamma_p_inv(theta, p) : bm::gamma_q_inv(theta, p);
    return params.mu * std::pow(tz / theta, 1.0 / params.nu);
}

std::vector<double> sample(Family family, const FamilyParams& params, std::size_t n, std::mt19937_64& rng) {
    validate(family, params);
    std::vector<double> out;
    out.reserve(n);
    if (family == Family::Normal) {
        std::normal_distribution<double> normal(params.mu, params.sigma);
        for (std::size_t i = 0; i < n; ++i) out.push_back(normal(rng));
        return out;
    }
    const double theta = theta_of(params);
    std::gamma_distribution<double> gamma(theta, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = gamma(rng) / theta;
        out.push_back(params.mu * std::pow(z, 1.0 / params.nu));
    }
    return out;
}

Moments gg_moments(const FamilyParams& params) {
    validate(Family::GeneralizedGamma, params);
    const double theta = theta_of(params);
    const double a1 = theta + 1.0 / params.nu;
    const double a2 = theta + 2.0 / params.nu;
    if (!(a1 > 0.0) || !(a2 > 0.0)) {
        throw Error(ErrorKind::MomentUndefined, "theta + k/nu must be > 0 for k = 1, 2");
    }
    // D(x) = Gamma(x) / Gamma(x + 1/nu), accurate to rounding even for large theta
    const double step = 1.0 / params.nu;
    const double d_theta = boost::math::tgamma_delta_ratio(theta, step);
    const double d_a1 = boost::math::tgamma_delta_ratio(a1, step);
    Moments m;
    m.mean = params.mu / (d_theta * std::pow(theta, step));
    // Var/mean^2 = Gamma(a2) Gamma(theta) / Gamma(a1)^2 - 1
    m.variance = m.mean * m.mean * (d_theta / d_a1 - 1.0);
    return m;
}

double link_fn(Link link, double value) { return link == Link::Identity ? value : std::log(value); }
double inverse_link(Link link, double eta) { return link == Link::Identity ? eta : std::exp(eta); }
double dmu_deta(Link link, double eta) { return link == Link::Identity ? 1.0 : std::exp(eta); }

ScoreWeight score_and_weight(Family family, const FamilyParams& params, double y, Wrt wrt, Link link) {
    validate(family, params);
    require_support(family, y);
    const double mu = params.mu;
    const double sigma = params.sigma;
    ScoreWeight out;
    if (family == Family::Normal) {
        switch (wrt) {
            case Wrt::Mu: {
                const double d = link == Link::Identity ? 1.0 : mu;
                out.score = (y - mu) / (sigma * sigma) * d;
                out.weight = d * d / (sigma * sigma);
                return out;
            }
            case Wrt::Sigma: {
                const double d = link == Link::Identity ? 1.0 : sigma;
                const double r = (y - mu) / sigma;
                out.score = (-1.0 + r * r) / sigma * d;
                out.weight = out.score * out.score;
                return out;
            }
            case Wrt::Nu:
                throw Error(ErrorKind::InvalidParams, "the Normal family has no nu parameter");
        }
    }
    const double nu = params.nu;
    const double theta = theta_of(params);
    const double log_ratio = std::log(y / mu);
    const double log_z = nu * log_ratio;
    const double z = std::exp(log_z);
    const double dl_dtheta = std::log(theta) + 1.0 + log_z - z - bm::digamma(theta);
    switch (wrt) {
        case Wrt::Mu: {
            const double d = link == Link::Identity ? 1.0 : mu;
            out.score = theta * nu * (z - 1.0) / mu * d;
            out.weight = d * d / (mu * mu * sigma * sigma);
            return out;
        }
        case Wrt::Sigma: {
            const double d = link == Link::Identity ? 1.0 : sigma;
            out.score = dl_dtheta * (-2.0 * theta / sigma) * d;
            out.weight = out.score * out.score;
            return out;
        }
        case Wrt::Nu: {
            const double d = link == Link::Identity ? 1.0 : nu;
            out.score = (1.0 / nu - (2.0 * theta / nu) * dl_dtheta + theta * log_ratio * (1.0 - z)) * d;
            out.weight = out.score * out.score;
            return out;
        }
    }
    return out;
}

double mu_score_dy(Family family, const FamilyParams& params, double y, Link link) {
    validate(family, params);
    require_support(family, y);
    const double d = link == Link::Identity ? 1.0 : params.mu;
    if (family == Family::Normal) return d / (params.sigma * params.sigma);
    const double z = std::pow(y / params.mu, params.nu);
    return z / (params.sigma * params.sigma * y * params.mu) * d;
}

double quantile_residual(Family family, const FamilyParams& params, double y) {
    const double lower = cdf(family, params, y);
    if (lower <= 0.5) return normal_quantile(std::max(lower, kResidualClamp));
    const double upper = sf(family, params, y);
    return -normal_quantile(std::max(upper, kResidualClamp));
}

}  // namespace hierfit::dist
