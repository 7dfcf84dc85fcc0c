#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "hierfit/model_spec.hpp"
#include "hierfit/table.hpp"

namespace hierfit::data {

struct TermColumns {
    std::string label;
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

/// Grouping of the rows for one random level. Groups are numbered in
/// first-appearance order; `parent` maps each group to its group on the
/// previous (outer) level.
struct GroupLevel {
    std::string name;
    std::string path_label;
    std::vector<int> group_of_row;
    std::vector<std::string> group_labels;
    std::vector<int> parent;

    std::size_t n_groups() const { return group_labels.size(); }
    Eigen::MatrixXd indicator() const;
};

struct CovariateScaling {
    double center = 0.0;
    double scale = 1.0;
};

/// Fixed-effect and random-effect design. X uses the centred and scaled time
/// covariate; X_raw spans the same column space with raw time powers and is
/// used for reporting (beta_raw = basis_to_raw * beta).
struct DesignMatrices {
    Eigen::MatrixXd X;
    Eigen::MatrixXd X_raw;
    Eigen::MatrixXd basis_to_raw;
    std::vector<std::string> column_labels;
    std::vector<TermColumns> column_map;
    std::vector<GroupLevel> levels;
    CovariateScaling time_scaling;

    std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t p() const { return static_cast<std::size_t>(X.cols()); }

    std::vector<Eigen::MatrixXd> Z_list() const;
};

DesignMatrices build_design(const LongTable& table, const ModelSpec& spec);

/// Grouping structure only (no fixed part).
std::vector<GroupLevel> build_groups(const LongTable& table, const std::vector<RandomLevel>& levels);

/// Numerator degrees of freedom of a term under treatment contrasts.
int term_dof(const Term& term, const LongTable& table);

}  // namespace hierfit::data
