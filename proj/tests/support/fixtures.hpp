#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hierfit/simulator.hpp"
#include "hierfit/table.hpp"

namespace fixture {

/// Same rows with the response replaced.
hierfit::data::LongTable with_heights(const hierfit::data::LongTable& table, const Eigen::VectorXd& y);

/// Balanced layout of the given size, heights zero.
hierfit::data::LongTable layout(int blocks, int plots, int subplots, int plants, std::vector<double> times);

/// Product correlation of two equally long vectors.
double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace fixture
