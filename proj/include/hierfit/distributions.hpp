#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "hierfit/model_spec.hpp"

namespace hierfit::dist {

/// Distribution parameters on their natural scale. For the generalized gamma
/// (GG) family, z = (y/mu)^nu and theta = 1/(sigma^2 nu^2); Normal ignores nu.
struct FamilyParams {
    double mu = 0.0;
    double sigma = 1.0;
    double nu = 1.0;
};

/// Smallest |nu| accepted for GG; the lognormal limit is not modelled.
inline constexpr double kMinAbsNu = 1e-4;

enum class Wrt { Mu, Sigma, Nu };

void validate(Family family, const FamilyParams& params);

double logpdf(Family family, const FamilyParams& params, double y);
double pdf(Family family, const FamilyParams& params, double y);
double cdf(Family family, const FamilyParams& params, double y);
/// Upper tail 1 - cdf, computed without cancellation.
double sf(Family family, const FamilyParams& params, double y);
double quantile(Family family, const FamilyParams& params, double p);

/// i.i.d. draws; n = 0 gives an empty vector.
std::vector<double> sample(Family family, const FamilyParams& params, std::size_t n, std::mt19937_64& rng);

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Exact GG mean and variance:
///   E[Y^k] = mu^k Gamma(theta + k/nu) / (theta^(k/nu) Gamma(theta)).
/// Only at nu = 1 do these reduce to mu and mu^2 sigma^2.
Moments gg_moments(const FamilyParams& params);

struct ScoreWeight {
    double score = 0.0;   // dl/deta
    double weight = 0.0;  // > 0
};

/// First derivative of the log-density with respect to the link-scale
/// predictor of one parameter, plus a positive working weight. For mu the
/// weight is the expected information on the link scale (what the PQL
/// working model needs); for sigma and nu it is the squared score.
ScoreWeight score_and_weight(Family family, const FamilyParams& params, double y, Wrt wrt, Link link);

/// d(dl/deta_mu)/dy, used for the Jacobian of the PQL working response.
double mu_score_dy(Family family, const FamilyParams& params, double y, Link link);

double link_fn(Link link, double value);
double inverse_link(Link link, double eta);
double dmu_deta(Link link, double eta);

double normal_cdf(double x);
double normal_sf(double x);
double normal_quantile(double p);
double normal_pdf(double x);

/// Normalized quantile residual Phi^-1(F(y)), evaluated on whichever tail is
/// smaller so both tails keep full precision; probabilities are clamped to
/// [1e-12, 1 - 1e-12].
double quantile_residual(Family family, const FamilyParams& params, double y);

}  // namespace hierfit::dist
