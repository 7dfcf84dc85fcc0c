#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hierfit/error.hpp"
#include "hierfit/inference.hpp"

namespace hierfit::inference {

namespace {

bool constant_within(const Eigen::VectorXd& column, const data::GroupLevel& level) {
    const double scale = std::max(1.0, column.cwiseAbs().maxCoeff());
    std::vector<double> first(level.n_groups(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < level.group_of_row.size(); ++i) {
        double& f = first[static_cast<std::size_t>(level.group_of_row[i])];
        const double x = column[static_cast<Eigen::Index>(i)];
        if (std::isnan(f)) {
            f = x;
        } else if (std::abs(x - f) > 1e-12 * scale) {
            return false;
        }
    }
    return true;
}

Eigen::VectorXd group_means(const Eigen::VectorXd& x, const data::GroupLevel& level) {
    std::vector<double> sum(level.n_groups(), 0.0);
    std::vector<double> count(level.n_groups(), 0.0);
    for (std::size_t i = 0; i < level.group_of_row.size(); ++i) {
        sum[static_cast<std::size_t>(level.group_of_row[i])] += x[static_cast<Eigen::Index>(i)];
        count[static_cast<std::size_t>(level.group_of_row[i])] += 1.0;
    }
    Eigen::VectorXd out(x.size());
    for (std::size_t i = 0; i < level.group_of_row.size(); ++i) {
        const auto g = static_cast<std::size_t>(level.group_of_row[i]);
        out[static_cast<Eigen::Index>(i)] = sum[g] / count[g];
    }
    return out;
}

AnovaTable sequential_f_impl(const lmm::LmmFit& fit) {
    const auto& design = fit.design;
    const auto& levels = design.levels;
    const std::size_t L = levels.size();
    const auto n = static_cast<Eigen::Index>(design.n());
    const auto p = static_cast<Eigen::Index>(design.p());
    const double delta = fit.delta_or_zero();

    const lmm::NestedCovariance cov(levels, fit.variance_covariate, fit.prior_weights);

    Eigen::MatrixXd U(n, p + 1);
    U << design.X, fit.y;
    const Eigen::MatrixXd LU = cov.solve(U, fit.ratios, delta);
    const Eigen::MatrixXd XtLX = design.X.transpose() * LU.leftCols(p);
    const Eigen::VectorXd XtLy = design.X.transpose() * LU.col(p);
    Eigen::LLT<Eigen::MatrixXd> llt(XtLX);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::RankDeficient, "GLS normal equations are singular");
    const Eigen::VectorXd c = llt.matrixL().solve(XtLy);
    const Eigen::VectorXd beta = llt.solve(XtLy);
    const Eigen::VectorXd resid = fit.y - design.X * beta;

    // stratum residuals: between-group parts of the residual, outermost first
    Eigen::MatrixXd P(n, static_cast<Eigen::Index>(L + 1));
    Eigen::VectorXd previous = Eigen::VectorXd::Zero(n);
    for (std::size_t s = 0; s < L; ++s) {
        const Eigen::VectorXd avg = group_means(resid, levels[s]);
        P.col(static_cast<Eigen::Index>(s)) = avg - previous;
        previous = avg;
    }
    P.col(static_cast<Eigen::Index>(L)) = resid - previous;
    const Eigen::MatrixXd LP = cov.solve(P, fit.ratios, delta);

    std::vector<std::size_t> term_stratum;
    std::vector<int> p_stratum(L + 1, 0);
    for (const auto& term : design.column_map) {
        std::size_t stratum = 0;
        for (std::size_t j = term.begin; j < term.end; ++j) {
            const Eigen::VectorXd col = design.X.col(static_cast<Eigen::Index>(j));
            std::size_t s = 0;
            while (s < L && !constant_within(col, levels[s])) ++s;
            stratum = std::max(stratum, s);
        }
        term_stratum.push_back(stratum);
        p_stratum[stratum] += static_cast<int>(term.size());
    }

    std::vector<int> den_df(L + 1);
    std::vector<double> mean_square(L + 1);
    int m_prev = 0;
    for (std::size_t s = 0; s <= L; ++s) {
        const int m = s < L ? static_cast<int>(levels[s].n_groups()) : static_cast<int>(n);
        den_df[s] = m - m_prev - p_stratum[s];
        m_prev = m;
        const double rss = P.col(static_cast<Eigen::Index>(s)).dot(LP.col(static_cast<Eigen::Index>(s)));
        mean_square[s] = den_df[s] > 0 ? rss / den_df[s] : std::numeric_limits<double>::quiet_NaN();
    }

    AnovaTable table;
    for (std::size_t t = 0; t < design.column_map.size(); ++t) {
        const auto& term = design.column_map[t];
        if (term.label == "(Intercept)") continue;
        AnovaRow row;
        row.term = term.label;
        const std::size_t s = term_stratum[t];
        row.stratum = s < L ? levels[s].name : "Residual";
        row.num_df = static_cast<int>(term.size());
        row.den_df = den_df[s];
        const double ss = c.segment(static_cast<Eigen::Index>(term.begin), static_cast<Eigen::Index>(term.size())).squaredNorm();
        if (row.den_df > 0 && mean_square[s] > 0.0) {
            row.F = (ss / row.num_df) / mean_square[s];
            row.p = f_sf(row.F, row.num_df, row.den_df);
        } else {
            row.F = std::numeric_limits<double>::quiet_NaN();
            row.p = std::numeric_limits<double>::quiet_NaN();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace

AnovaTable sequential_f(const lmm::LmmFit& fit) {
    if (!fit.converged) throw Error(ErrorKind::NotConverged, "F-tests need a converged fit");
    return sequential_f_impl(fit);
}

AnovaTable sequential_f(const gamlss::GamlssFit& fit) {
    if (!fit.converged) throw Error(ErrorKind::NotConverged, "F-tests need a converged fit");
    return sequential_f_impl(fit.working);
}

std::string AnovaTable::to_text() const {
    std::size_t width = 4;
    for (const auto& r : rows) width = std::max(width, r.term.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %8s %8s %12s %10s  %s\n", static_cast<int>(width), "Term", "numDF", "denDF",
                  "F-value", "p-value", "stratum");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-*s %8d %8d %12.4f %10.4g  %s\n", static_cast<int>(width), r.term.c_str(),
                      r.num_df, r.den_df, r.F, r.p, r.stratum.c_str());
        out += buf;
    }
    return out;
}

}  // namespace hierfit::inference
