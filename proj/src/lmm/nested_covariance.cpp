#include <cmath>
#include <map>
#include <utility>

#include "hierfit/error.hpp"
#include "hierfit/lmm.hpp"

namespace hierfit::lmm {

namespace {

constexpr std::size_t kMaxGramClasses = 32;

}  // namespace

NestedCovariance::NestedCovariance(const std::vector<data::GroupLevel>& levels, Eigen::VectorXd v, Eigen::VectorXd w)
    : v_(std::move(v)), w_(std::move(w)) {
    if (w_.size() == 0) w_ = Eigen::VectorXd::Ones(v_.size());
    if (w_.size() != v_.size()) throw Error(ErrorKind::InvalidParams, "prior weights do not match observations");
    for (Eigen::Index i = 0; i < v_.size(); ++i) {
        if (!(v_[i] > 0.0) || !(w_[i] > 0.0) || !std::isfinite(v_[i]) || !std::isfinite(w_[i])) {
            throw Error(ErrorKind::NotPositiveDefinite, "variance covariate and weights must be finite and > 0");
        }
    }
    for (std::size_t l = 0; l < levels.size(); ++l) {
        group_of_row_.push_back(levels[l].group_of_row);
        parent_.push_back(levels[l].parent);
        n_groups_.push_back(static_cast<int>(levels[l].n_groups()));
        if (l > 0 && levels[l].parent.size() != levels[l].n_groups()) {
            throw Error(ErrorKind::BrokenNesting, "level " + levels[l].path_label + " has no parent map");
        }
    }
}

Eigen::VectorXd NestedCovariance::base_diagonal(double delta) const {
    Eigen::VectorXd d(v_.size());
    for (Eigen::Index i = 0; i < v_.size(); ++i) d[i] = (delta == 0.0 ? 1.0 : std::pow(v_[i], 2.0 * delta)) / w_[i];
    return d;
}

Eigen::MatrixXd NestedCovariance::solve(const Eigen::MatrixXd& M, std::span<const double> ratios, double delta) const {
    const Eigen::VectorXd d = base_diagonal(delta);
    Eigen::MatrixXd W = M.array().colwise() / d.array();
    Eigen::VectorXd u = d.cwiseInverse();
    const auto k = M.cols();
    for (std::size_t l = n_levels(); l-- > 0;) {
        const double r = ratios[l];
        if (r == 0.0) continue;
        const auto& group = group_of_row_[l];
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_groups_[l], k);
        Eigen::VectorXd T = Eigen::VectorXd::Zero(n_groups_[l]);
        for (std::size_t i = 0; i < group.size(); ++i) {
            S.row(group[i]) += W.row(static_cast<Eigen::Index>(i));
            T[group[i]] += u[static_cast<Eigen::Index>(i)];
        }
        for (std::size_t i = 0; i < group.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double denom = 1.0 + r * T[group[i]];
            W.row(ii) -= (r * u[ii] / denom) * S.row(group[i]);
            u[ii] /= denom;
        }
    }
    return W;
}

double NestedCovariance::log_determinant(std::span<const double> ratios, double delta) const {
    const Eigen::VectorXd d = base_diagonal(delta);
    double logdet = d.array().log().sum();
    std::vector<double> T;
    for (std::size_t l = n_levels(); l-- > 0;) {
        std::vector<double> next(static_cast<std::size_t>(n_groups_[l]), 0.0);
        if (l + 1 == n_levels()) {
            for (std::size_t i = 0; i < group_of_row_[l].size(); ++i) {
                next[static_cast<std::size_t>(group_of_row_[l][i])] += 1.0 / d[static_cast<Eigen::Index>(i)];
            }
        } else {
            for (std::size_t g = 0; g < T.size(); ++g) next[static_cast<std::size_t>(parent_[l + 1][g])] += T[g];
        }
        const double r = ratios[l];
        for (double& t : next) {
            const double denom = 1.0 + r * t;
            logdet += std::log(denom);
            t /= denom;
        }
        T = std::move(next);
    }
    return logdet;
}

Eigen::MatrixXd NestedCovariance::dense(std::span<const double> ratios, double delta) const {
    Eigen::MatrixXd L = base_diagonal(delta).asDiagonal();
    const auto n = static_cast<std::size_t>(v_.size());
    for (std::size_t l = 0; l < n_levels(); ++l) {
        const auto& group = group_of_row_[l];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (group[i] == group[j]) {
                    L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += ratios[l];
                }
            }
        }
    }
    return L;
}

GramEvaluator::GramEvaluator(const NestedCovariance& cov, Eigen::MatrixXd U) : cov_(cov), U_(std::move(U)) {
    if (static_cast<std::size_t>(U_.rows()) != cov_.n()) {
        throw Error(ErrorKind::InvalidParams, "matrix rows do not match the covariance dimension");
    }
    std::map<std::pair<double, double>, int> index;
    class_of_row_.reserve(cov_.n());
    for (Eigen::Index i = 0; i < U_.rows(); ++i) {
        auto [it, inserted] = index.emplace(std::make_pair(cov_.v_[i], cov_.w_[i]), static_cast<int>(class_v_.size()));
        if (inserted) {
            class_v_.push_back(cov_.v_[i]);
            class_w_.push_back(cov_.w_[i]);
        }
        class_of_row_.push_back(it->second);
    }
    if (class_v_.size() <= kMaxGramClasses && 2 * class_v_.size() <= cov_.n()) {
        const auto k = U_.cols();
        class_gram_.assign(class_v_.size(), Eigen::MatrixXd::Zero(k, k));
        std::vector<std::vector<Eigen::Index>> rows(class_v_.size());
        for (std::size_t i = 0; i < class_of_row_.size(); ++i) {
            rows[static_cast<std::size_t>(class_of_row_[i])].push_back(static_cast<Eigen::Index>(i));
        }
        for (std::size_t c = 0; c < rows.size(); ++c) {
            const Eigen::MatrixXd sub = U_(rows[c], Eigen::all);
            class_gram_[c] = sub.transpose() * sub;
        }
    }
    for (std::size_t l = 0; l < cov_.n_levels(); ++l) {
        S_.emplace_back(U_.cols(), cov_.n_groups_[l]);
        T_.emplace_back(cov_.n_groups_[l]);
    }
}

double GramEvaluator::evaluate(std::span<const double> ratios, double delta, Eigen::MatrixXd& A) const {
    std::vector<double> class_d(class_v_.size());
    for (std::size_t c = 0; c < class_v_.size(); ++c) {
        class_d[c] = (delta == 0.0 ? 1.0 : std::pow(class_v_[c], 2.0 * delta)) / class_w_[c];
    }
    const auto n = U_.rows();
    d_inv_.resize(n);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = class_d[static_cast<std::size_t>(class_of_row_[static_cast<std::size_t>(i)])];
        d_inv_[i] = 1.0 / d;
        logdet += std::log(d);
    }
    if (!class_gram_.empty()) {
        A.setZero(U_.cols(), U_.cols());
        for (std::size_t c = 0; c < class_gram_.size(); ++c) A += class_gram_[c] / class_d[c];
    } else {
        A.noalias() = U_.transpose() * (U_.array().colwise() * d_inv_.array()).matrix();
    }

    const std::size_t L = cov_.n_levels();
    if (L == 0) return logdet;

    for (std::size_t l = L; l-- > 0;) {
        Eigen::MatrixXd& S = S_[l];
        Eigen::VectorXd& T = T_[l];
        S.setZero();
        T.setZero();
        if (l + 1 == L) {
            const auto& group = cov_.group_of_row_[l];
            for (Eigen::Index i = 0; i < n; ++i) {
                const int g = group[static_cast<std::size_t>(i)];
                S.col(g) += d_inv_[i] * U_.row(i).transpose();
                T[g] += d_inv_[i];
            }
        } else {
            const auto& parent = cov_.parent_[l + 1];
            for (std::size_t g = 0; g < parent.size(); ++g) {
                S.col(parent[g]) += S_[l + 1].col(static_cast<Eigen::Index>(g));
                T[parent[g]] += T_[l + 1][static_cast<Eigen::Index>(g)];
            }
        }
        const double r = ratios[l];
        if (r == 0.0) continue;
        Eigen::VectorXd c(T.size());
        for (Eigen::Index g = 0; g < T.size(); ++g) {
            const double denom = 1.0 + r * T[g];
            logdet += std::log(denom);
            c[g] = r / denom;
            T[g] /= denom;
        }
        A.noalias() -= S * c.asDiagonal() * S.transpose();
        for (Eigen::Index g = 0; g < T.size(); ++g) S.col(g) *= c[g] / r;
    }
    return logdet;
}

}  // namespace hierfit::lmm
