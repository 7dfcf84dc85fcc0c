#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "hierfit/design.hpp"
#include "hierfit/error.hpp"

namespace hierfit::data {

namespace {

void check_variable(const Variable& v, const LongTable& table) {
    if (table.has_factor(v.name)) {
        if (v.power != 1) {
            throw Error(ErrorKind::UnknownTerm, "polynomial of factor '" + v.name + "' is not a valid term");
        }
        return;
    }
    if (v.name == kTime) return;
    throw Error(ErrorKind::UnknownTerm, "unknown variable '" + v.name + "'");
}

/// Key of a term with the time part replaced by time^power (0 removes it).
std::string key_with_time_power(const Term& term, int power) {
    std::vector<std::string> labels;
    for (const auto& v : term.parts) {
        if (v.name == kTime) {
            if (power > 0) labels.push_back(Variable{v.name, power}.label());
        } else {
            labels.push_back(v.label());
        }
    }
    std::sort(labels.begin(), labels.end());
    std::string key;
    for (const auto& l : labels) key += l + ":";
    return key;
}

/// Centring time only preserves the column space when every term with time^k
/// comes with its lower-order time companions.
bool time_hierarchy_complete(const std::vector<Term>& terms) {
    std::set<std::string> keys;
    for (const auto& t : terms) {
        std::vector<std::string> labels;
        for (const auto& v : t.parts) labels.push_back(v.label());
        std::sort(labels.begin(), labels.end());
        std::string key;
        for (const auto& l : labels) key += l + ":";
        keys.insert(key);
    }
    for (const auto& t : terms) {
        int power = 0;
        int time_parts = 0;
        for (const auto& v : t.parts) {
            if (v.name == kTime) {
                power = v.power;
                ++time_parts;
            }
        }
        if (time_parts > 1) return false;
        for (int j = 0; j < power; ++j) {
            if (!keys.count(key_with_time_power(t, j))) return false;
        }
    }
    return true;
}

struct ColumnBlock {
    Eigen::MatrixXd scaled;
    Eigen::MatrixXd raw;
    std::vector<std::string> labels;
};

ColumnBlock term_columns(const Term& term, const LongTable& table, const CovariateScaling& scaling) {
    const auto n = static_cast<Eigen::Index>(table.size());
    ColumnBlock block;
    block.scaled = Eigen::MatrixXd::Ones(n, 1);
    block.raw = Eigen::MatrixXd::Ones(n, 1);
    block.labels = {""};
    for (const auto& part : term.parts) {
        check_variable(part, table);
        Eigen::MatrixXd part_scaled;
        Eigen::MatrixXd part_raw;
        std::vector<std::string> part_labels;
        if (table.has_factor(part.name)) {
            const Factor& f = table.factor(part.name);
            const auto k = static_cast<Eigen::Index>(f.n_levels());
            part_scaled = Eigen::MatrixXd::Zero(n, std::max<Eigen::Index>(k - 1, 0));
            for (Eigen::Index i = 0; i < n; ++i) {
                const int code = f.codes[static_cast<std::size_t>(i)];
                if (code > 0) part_scaled(i, code - 1) = 1.0;
            }
            part_raw = part_scaled;
            for (std::size_t l = 1; l < f.levels.size(); ++l) part_labels.push_back(part.name + f.levels[l]);
        } else {
            const auto values = table.covariate(part.name);
            part_scaled.resize(n, 1);
            part_raw.resize(n, 1);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double raw = values[static_cast<std::size_t>(i)];
                const double u = (raw - scaling.center) / scaling.scale;
                part_scaled(i, 0) = std::pow(u, part.power);
                part_raw(i, 0) = std::pow(raw, part.power);
            }
            part_labels.push_back(part.label());
        }
        // Earlier parts vary fastest, as in R's model.matrix.
        ColumnBlock next;
        const auto cols = block.scaled.cols() * part_scaled.cols();
        next.scaled.resize(n, cols);
        next.raw.resize(n, cols);
        Eigen::Index c = 0;
        for (Eigen::Index b = 0; b < part_scaled.cols(); ++b) {
            for (Eigen::Index a = 0; a < block.scaled.cols(); ++a, ++c) {
                next.scaled.col(c) = block.scaled.col(a).cwiseProduct(part_scaled.col(b));
                next.raw.col(c) = block.raw.col(a).cwiseProduct(part_raw.col(b));
                const auto& left = block.labels[static_cast<std::size_t>(a)];
                const auto& right = part_labels[static_cast<std::size_t>(b)];
                next.labels.push_back(left.empty() ? right : left + ":" + right);
            }
        }
        block = std::move(next);
    }
    if (term.is_intercept()) block.labels = {"(Intercept)"};
    return block;
}

}  // namespace

Eigen::MatrixXd GroupLevel::indicator() const {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(group_of_row.size()),
                                              static_cast<Eigen::Index>(n_groups()));
    for (std::size_t i = 0; i < group_of_row.size(); ++i) Z(static_cast<Eigen::Index>(i), group_of_row[i]) = 1.0;
    return Z;
}

std::vector<Eigen::MatrixXd> DesignMatrices::Z_list() const {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& level : levels) out.push_back(level.indicator());
    return out;
}

std::vector<GroupLevel> build_groups(const LongTable& table, const std::vector<RandomLevel>& levels) {
    std::vector<GroupLevel> out;
    for (const auto& level : levels) {
        GroupLevel g;
        g.name = level.name();
        g.path_label = level.label();
        std::vector<const Factor*> factors;
        for (const auto& name : level.path) {
            if (!table.has_factor(name)) throw Error(ErrorKind::UnknownTerm, "unknown grouping factor '" + name + "'");
            factors.push_back(&table.factor(name));
        }
        std::map<std::string, int> index_of;
        g.group_of_row.reserve(table.size());
        for (std::size_t i = 0; i < table.size(); ++i) {
            std::string key;
            for (std::size_t f = 0; f < factors.size(); ++f) key += (f ? "/" : "") + factors[f]->label(i);
            auto [it, inserted] = index_of.emplace(key, static_cast<int>(g.group_labels.size()));
            if (inserted) g.group_labels.push_back(key);
            g.group_of_row.push_back(it->second);
        }
        if (!out.empty()) {
            const GroupLevel& outer = out.back();
            g.parent.assign(g.n_groups(), -1);
            for (std::size_t i = 0; i < table.size(); ++i) {
                int& p = g.parent[static_cast<std::size_t>(g.group_of_row[i])];
                if (p < 0) {
                    p = outer.group_of_row[i];
                } else if (p != outer.group_of_row[i]) {
                    throw Error(ErrorKind::BrokenNesting, "level " + g.path_label + " is not nested in " +
                                                              outer.path_label);
                }
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

int term_dof(const Term& term, const LongTable& table) {
    int dof = 1;
    for (const auto& part : term.parts) {
        check_variable(part, table);
        if (table.has_factor(part.name)) dof *= static_cast<int>(table.factor(part.name).n_levels()) - 1;
    }
    return dof;
}

DesignMatrices build_design(const LongTable& table, const ModelSpec& spec) {
    spec.validate();
    if (spec.response != kResponse) {
        throw Error(ErrorKind::UnknownTerm, "response must be '" + std::string(kResponse) + "'");
    }
    if (spec.power_covariate && !table.has_covariate(*spec.power_covariate)) {
        throw Error(ErrorKind::UnknownTerm, "unknown variance covariate '" + *spec.power_covariate + "'");
    }

    DesignMatrices d;
    const auto& time = table.time();
    const double n = static_cast<double>(time.size());
    const double mean = std::accumulate(time.begin(), time.end(), 0.0) / n;
    double ss = 0.0;
    for (double t : time) ss += (t - mean) * (t - mean);
    const double sd = time.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    d.time_scaling.scale = sd > 0.0 ? sd : 1.0;
    d.time_scaling.center = time_hierarchy_complete(spec.fixed_terms) ? mean : 0.0;

    std::vector<ColumnBlock> blocks;
    std::size_t p = 0;
    for (const auto& term : spec.fixed_terms) {
        blocks.push_back(term_columns(term, table, d.time_scaling));
        const auto cols = static_cast<std::size_t>(blocks.back().scaled.cols());
        d.column_map.push_back(TermColumns{term.label(), p, p + cols});
        p += cols;
    }
    const auto rows = static_cast<Eigen::Index>(table.size());
    d.X.resize(rows, static_cast<Eigen::Index>(p));
    d.X_raw.resize(rows, static_cast<Eigen::Index>(p));
    for (std::size_t t = 0; t < blocks.size(); ++t) {
        const auto begin = static_cast<Eigen::Index>(d.column_map[t].begin);
        d.X.middleCols(begin, blocks[t].scaled.cols()) = blocks[t].scaled;
        d.X_raw.middleCols(begin, blocks[t].raw.cols()) = blocks[t].raw;
        d.column_labels.insert(d.column_labels.end(), blocks[t].labels.begin(), blocks[t].labels.end());
    }

    for (std::size_t t = 0; t < d.column_map.size(); ++t) {
        if (d.column_map[t].size() == 0) {
            throw Error(ErrorKind::RankDeficient, "term '" + d.column_map[t].label + "' has no columns");
        }
    }
    Eigen::VectorXd norms = d.X.colwise().norm();
    Eigen::MatrixXd normalized = d.X * norms.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normalized);
    qr.setThreshold(1e-10);
    if (static_cast<std::size_t>(qr.rank()) < p) {
        throw Error(ErrorKind::RankDeficient, "fixed-effect design has rank " + std::to_string(qr.rank()) + " < " +
                                                  std::to_string(p) + " columns");
    }

    Eigen::VectorXd raw_norms = d.X_raw.colwise().norm();
    Eigen::MatrixXd raw_normalized = d.X_raw * raw_norms.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> raw_qr(raw_normalized);
    d.basis_to_raw = raw_norms.cwiseInverse().asDiagonal() * raw_qr.solve(d.X);

    d.levels = build_groups(table, spec.random_levels);
    return d;
}

}  // namespace hierfit::data
