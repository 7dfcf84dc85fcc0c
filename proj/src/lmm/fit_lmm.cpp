#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hierfit/error.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/nelder_mead.hpp"

namespace hierfit::lmm {

namespace {

constexpr double kLogRatioMin = -30.0;
constexpr double kLogRatioMax = 25.0;
constexpr double kBoundaryRatio = 1e-8;
// log(1e-6): ratios below this are treated as boundary candidates
constexpr double kPinBelow = -13.815510557964274;
constexpr double kLog2Pi = 1.8378770664093453;
constexpr int kMaxEvaluations = 4000;

struct Profile {
    double loglik = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
    Eigen::MatrixXd xtx;
};

class Profiler {
public:
    // The profile runs on y - X b0 (b0 = OLS) so that the residual sum of
    // squares is not a small difference of large Gram entries.
    Profiler(const NestedCovariance& cov, const Eigen::MatrixXd& X, const Eigen::VectorXd& y)
        : b0_(X.colPivHouseholderQr().solve(y)),
          gram_(cov, stack(X, y - X * b0_)),
          p_(X.cols()),
          n_(static_cast<double>(X.rows())) {}

    Profile at(std::span<const double> ratios, double delta, bool keep = false) const {
        Profile out;
        const double logdet = gram_.evaluate(ratios, delta, A_);
        Eigen::LLT<Eigen::MatrixXd> llt(A_.topLeftCorner(p_, p_));
        if (llt.info() != Eigen::Success || !std::isfinite(logdet)) return out;
        const Eigen::VectorXd xty = A_.col(p_).head(p_);
        Eigen::VectorXd beta = llt.solve(xty);
        const double rss = A_(p_, p_) - xty.dot(beta);
        if (!(rss > 0.0)) return out;
        out.sigma2 = rss / n_;
        out.loglik = -0.5 * (n_ * kLog2Pi + n_ * std::log(out.sigma2) + logdet + n_);
        if (keep) {
            out.beta = beta + b0_;
            out.xtx = A_.topLeftCorner(p_, p_);
        }
        return out;
    }

private:
    static Eigen::MatrixXd stack(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
        Eigen::MatrixXd U(X.rows(), X.cols() + 1);
        U << X, y;
        return U;
    }

    Eigen::VectorXd b0_;
    GramEvaluator gram_;
    Eigen::Index p_;
    double n_;
    mutable Eigen::MatrixXd A_;
};

struct Point {
    std::vector<double> ratios;
    double delta = 0.0;
};

Point decode(std::span<const double> x, std::size_t levels, bool has_delta) {
    Point p;
    p.ratios.resize(levels);
    for (std::size_t l = 0; l < levels; ++l) p.ratios[l] = std::exp(std::clamp(x[l], kLogRatioMin, kLogRatioMax));
    if (has_delta) p.delta = x[levels];
    return p;
}

std::vector<double> group_sums(const Eigen::VectorXd& values, const data::GroupLevel& level) {
    std::vector<double> sums(level.n_groups(), 0.0);
    for (std::size_t i = 0; i < level.group_of_row.size(); ++i) {
        sums[static_cast<std::size_t>(level.group_of_row[i])] += values[static_cast<Eigen::Index>(i)];
    }
    return sums;
}

/// Moment-based starting point: OLS residuals, nested between-group mean
/// squares, and a log-log regression of squared residuals for delta.
std::vector<double> moment_start(const data::DesignMatrices& design, const Eigen::VectorXd& y, const Eigen::VectorXd& v,
                                 bool has_delta) {
    const auto n = static_cast<double>(y.size());
    const Eigen::VectorXd beta = design.X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd e = y - design.X * beta;
    const double total = std::max(e.squaredNorm() / n, 1e-300);

    double delta0 = 0.0;
    if (has_delta) {
        const Eigen::ArrayXd lv = v.array().log();
        const Eigen::ArrayXd le = (e.array().square() + 1e-8 * total).log();
        const double lv_mean = lv.mean();
        const double sxx = (lv - lv_mean).square().sum();
        if (sxx > 0.0) delta0 = 0.5 * ((lv - lv_mean) * (le - le.mean())).sum() / sxx;
        delta0 = std::clamp(delta0, -3.0, 3.0);
    }

    const std::size_t L = design.levels.size();
    std::vector<std::vector<double>> means(L);
    std::vector<std::vector<double>> counts(L);
    for (std::size_t l = 0; l < L; ++l) {
        means[l] = group_sums(e, design.levels[l]);
        counts[l] = group_sums(Eigen::VectorXd::Ones(y.size()), design.levels[l]);
        for (std::size_t g = 0; g < means[l].size(); ++g) means[l][g] /= counts[l][g];
    }

    // within-innermost mean square
    double within = total;
    if (L > 0) {
        double ss = 0.0;
        const auto& inner = design.levels[L - 1];
        for (std::size_t i = 0; i < inner.group_of_row.size(); ++i) {
            const double d = e[static_cast<Eigen::Index>(i)] - means[L - 1][static_cast<std::size_t>(inner.group_of_row[i])];
            ss += d * d;
        }
        const double df = n - static_cast<double>(inner.n_groups());
        if (df > 0.0 && ss > 0.0) within = ss / df;
    }

    std::vector<double> level_var(L, 0.0);
    double below = within;
    for (std::size_t l = L; l-- > 0;) {
        const auto& level = design.levels[l];
        const double m = static_cast<double>(level.n_groups());
        const double m_parent = l == 0 ? 1.0 : static_cast<double>(design.levels[l - 1].n_groups());
        double ss = 0.0;
        for (std::size_t g = 0; g < level.n_groups(); ++g) {
            const double parent_mean = l == 0 ? 0.0 : means[l - 1][static_cast<std::size_t>(level.parent[g])];
            ss += (means[l][g] - parent_mean) * (means[l][g] - parent_mean);
        }
        const double between = m > m_parent ? ss / (m - m_parent) : 0.0;
        const double children = l + 1 == L ? n / m : static_cast<double>(design.levels[l + 1].n_groups()) / m;
        level_var[l] = std::max(between - below / children, 1e-3 * total);
        below = between;
    }

    const double scale = v.array().pow(2.0 * delta0).mean();
    const double sigma2 = within / scale;
    std::vector<double> x;
    for (double s : level_var) x.push_back(std::log(s / sigma2));
    if (has_delta) x.push_back(delta0);
    return x;
}

}  // namespace

Eigen::VectorXd response_vector(const data::LongTable& table) {
    const auto& h = table.height();
    return Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
}

Eigen::VectorXd variance_covariate(const data::LongTable& table, const data::ModelSpec& spec) {
    if (!spec.power_covariate) return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(table.size()));
    const auto values = table.covariate(*spec.power_covariate);
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

double marginal_loglik(const data::DesignMatrices& design, const Eigen::VectorXd& y, const VarianceComponents& vc,
                       const Eigen::VectorXd& beta, const Eigen::VectorXd& v, const Eigen::VectorXd& prior_weights) {
    if (!(vc.sigma2 > 0.0) || !std::isfinite(vc.sigma2)) {
        throw Error(ErrorKind::NotPositiveDefinite, "residual variance must be > 0");
    }
    if (vc.level_variances.size() != design.levels.size()) {
        throw Error(ErrorKind::InvalidParams, "one variance per random level is required");
    }
    std::vector<double> ratios;
    for (double s : vc.level_variances) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw Error(ErrorKind::NotPositiveDefinite, "random-effect variances must be >= 0");
        }
        ratios.push_back(s / vc.sigma2);
    }
    const auto n = y.size();
    const NestedCovariance cov(design.levels, vc.delta ? v : Eigen::VectorXd::Ones(n), prior_weights);
    const double delta = vc.delta.value_or(0.0);
    const Eigen::VectorXd r = y - design.X * beta;
    const double quad = r.dot(cov.solve(r, ratios, delta).col(0)) / vc.sigma2;
    const double logdet = static_cast<double>(n) * std::log(vc.sigma2) + cov.log_determinant(ratios, delta);
    return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + quad);
}

LmmFit fit_lmm(const data::DesignMatrices& design, const Eigen::VectorXd& y, const Eigen::VectorXd& v, bool has_delta,
               const LmmOptions& options) {
    const auto n = y.size();
    if (n != design.X.rows()) throw Error(ErrorKind::InvalidParams, "response length does not match the design");
    if (!y.allFinite()) throw Error(ErrorKind::DomainError, "response contains non-finite values");

    LmmFit fit;
    fit.design = design;
    fit.y = y;
    fit.variance_covariate = has_delta ? v : Eigen::VectorXd::Ones(n);
    fit.prior_weights = options.prior_weights.size() ? options.prior_weights : Eigen::VectorXd::Ones(n);

    const NestedCovariance cov(design.levels, fit.variance_covariate, fit.prior_weights);
    const Profiler profiler(cov, design.X, y);
    const std::size_t L = design.levels.size();

    const opt::Objective objective = [&](std::span<const double> x) {
        const Point p = decode(x, L, has_delta);
        return -profiler.at(p.ratios, p.delta).loglik;
    };
    opt::NelderMeadOptions nm;
    nm.max_evaluations = kMaxEvaluations;
    nm.initial_step.assign(L, 1.0);
    if (has_delta) nm.initial_step.push_back(0.25);
    nm.lower.assign(L, kLogRatioMin);
    nm.upper.assign(L, kLogRatioMax);
    if (has_delta) {
        nm.lower.push_back(-std::numeric_limits<double>::infinity());
        nm.upper.push_back(std::numeric_limits<double>::infinity());
    }

    opt::NelderMeadResult best;
    if (options.warm_start) {
        best = opt::nelder_mead(objective, *options.warm_start, nm);
        fit.evaluations = best.evaluations;
    } else {
        const std::vector<double> mom = moment_start(design, y, fit.variance_covariate, has_delta);
        std::vector<std::vector<double>> starts{mom};
        if (L > 0) {
            std::vector<double> equal(L, std::log(fit.variance_covariate.array().pow(2.0 * (has_delta ? mom[L] : 0.0)).mean()));
            if (has_delta) equal.push_back(mom[L]);
            std::vector<double> inflated = mom;
            for (std::size_t l = 0; l < L; ++l) inflated[l] += std::log(10.0);
            starts.push_back(equal);
            starts.push_back(inflated);
        }
        for (std::size_t s = 0; s < starts.size(); ++s) {
            opt::NelderMeadResult run = opt::nelder_mead(objective, starts[s], nm);
            fit.evaluations += run.evaluations;
            if (s == 0 || run.f < best.f) best = std::move(run);
        }
        opt::NelderMeadResult polish = opt::nelder_mead(objective, best.x, nm);
        fit.evaluations += polish.evaluations;
        if (polish.f < best.f) {
            best = std::move(polish);
        } else {
            best.converged = best.converged || polish.converged;
        }
    }

    // Coordinates that ran to the floor leave a flat objective that the
    // simplex cannot shrink in; pin them and re-optimise the rest.
    std::vector<std::size_t> free;
    std::vector<double> pinned = best.x;
    for (std::size_t j = 0; j < best.x.size(); ++j) {
        if (j < L && best.x[j] < kPinBelow) {
            pinned[j] = kLogRatioMin;
        } else {
            free.push_back(j);
        }
    }
    if (free.size() < best.x.size()) {
        const opt::Objective reduced = [&](std::span<const double> z) {
            std::vector<double> x = pinned;
            for (std::size_t k = 0; k < free.size(); ++k) x[free[k]] = z[k];
            return objective(x);
        };
        opt::NelderMeadOptions rnm;
        rnm.max_evaluations = kMaxEvaluations;
        std::vector<double> z0;
        for (std::size_t j : free) {
            z0.push_back(best.x[j]);
            rnm.initial_step.push_back(nm.initial_step[j]);
            rnm.lower.push_back(nm.lower[j]);
            rnm.upper.push_back(nm.upper[j]);
        }
        opt::NelderMeadResult run = opt::nelder_mead(reduced, z0, rnm);
        fit.evaluations += run.evaluations;
        if (run.f <= best.f + nm.f_tol) {
            for (std::size_t k = 0; k < free.size(); ++k) pinned[free[k]] = run.x[k];
            best.x = pinned;
            best.f = run.f;
            best.converged = run.converged;
        }
    }
    fit.converged = best.converged;
    fit.optimizer_point = best.x;

    Point point = decode(best.x, L, has_delta);
    fit.at_boundary.assign(L, false);
    for (std::size_t l = 0; l < L; ++l) {
        if (point.ratios[l] < kBoundaryRatio) {
            point.ratios[l] = 0.0;
            fit.at_boundary[l] = true;
        }
    }
    const Profile prof = profiler.at(point.ratios, point.delta, true);
    if (!std::isfinite(prof.loglik)) {
        throw Error(ErrorKind::NotPositiveDefinite, "likelihood is not finite at the optimum");
    }
    fit.ratios = point.ratios;
    fit.beta = prof.beta;
    fit.cov_beta = prof.sigma2 * prof.xtx.llt().solve(Eigen::MatrixXd::Identity(prof.xtx.rows(), prof.xtx.cols()));
    fit.beta_raw = design.basis_to_raw * fit.beta;
    const Eigen::MatrixXd cov_raw = design.basis_to_raw * fit.cov_beta * design.basis_to_raw.transpose();
    fit.std_errors_raw = cov_raw.diagonal().cwiseMax(0.0).cwiseSqrt();

    for (const auto& level : design.levels) fit.vc.levels.push_back(level.path_label);
    for (double r : point.ratios) fit.vc.level_variances.push_back(r * prof.sigma2);
    fit.vc.sigma2 = prof.sigma2;
    if (has_delta) fit.vc.delta = point.delta;

    fit.loglik = marginal_loglik(design, y, fit.vc, fit.beta, fit.variance_covariate, fit.prior_weights);
    fit.n_params = static_cast<int>(design.p() + L + 1 + (has_delta ? 1 : 0));

    fit.blups = blup(fit);
    fit.fitted_marginal = fitted(fit, FittedKind::Marginal);
    fit.fitted_conditional = fitted(fit, FittedKind::Conditional);
    return fit;
}

LmmFit fit_lmm(const data::LongTable& table, const data::ModelSpec& spec) {
    spec.validate();
    if (spec.family != Family::Normal) {
        throw Error(ErrorKind::InvalidSpec, "the mixed-model engine fits the Normal family only");
    }
    const data::DesignMatrices design = data::build_design(table, spec);
    LmmFit fit = fit_lmm(design, response_vector(table), variance_covariate(table, spec), spec.power_covariate.has_value());
    fit.spec = spec;
    return fit;
}

std::vector<Eigen::VectorXd> blup(const LmmFit& fit) {
    const auto& levels = fit.design.levels;
    std::vector<Eigen::VectorXd> out;
    if (levels.empty()) return out;
    const NestedCovariance cov(levels, fit.variance_covariate, fit.prior_weights);
    const Eigen::VectorXd r = fit.y - fit.design.X * fit.beta;
    const Eigen::VectorXd w = cov.solve(r, fit.ratios, fit.delta_or_zero()).col(0);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(levels[l].n_groups()));
        if (fit.ratios[l] > 0.0) {
            const std::vector<double> sums = group_sums(w, levels[l]);
            for (std::size_t g = 0; g < sums.size(); ++g) b[static_cast<Eigen::Index>(g)] = fit.ratios[l] * sums[g];
        }
        out.push_back(std::move(b));
    }
    return out;
}

Eigen::VectorXd fitted(const LmmFit& fit, FittedKind kind) {
    Eigen::VectorXd mu = fit.design.X * fit.beta;
    if (kind == FittedKind::Marginal) return mu;
    const auto& levels = fit.design.levels;
    for (std::size_t l = 0; l < levels.size() && l < fit.blups.size(); ++l) {
        for (std::size_t i = 0; i < levels[l].group_of_row.size(); ++i) {
            mu[static_cast<Eigen::Index>(i)] += fit.blups[l][levels[l].group_of_row[i]];
        }
    }
    return mu;
}

Eigen::VectorXd standardized_residuals(const LmmFit& fit) {
    const double delta = fit.delta_or_zero();
    Eigen::VectorXd out = fit.y - fitted(fit, FittedKind::Conditional);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double sd = std::sqrt(fit.vc.sigma2 / fit.prior_weights[i]) * std::pow(fit.variance_covariate[i], delta);
        out[i] /= sd;
    }
    return out;
}

}  // namespace hierfit::lmm
