#pragma once

#include <functional>
#include <span>
#include <vector>

namespace hierfit::opt {

struct NelderMeadOptions {
    /// Converged when every vertex lies within x_tol (max-norm) of the best
    /// one and the objective spread is below f_tol.
    double x_tol = 1e-8;
    double f_tol = 1e-8;
    int max_evaluations = 20000;
    /// Per-coordinate size of the initial simplex; empty means 1.0 each.
    std::vector<double> initial_step;
    /// Optional box; trial points are projected onto it. Empty means unbounded.
    std::vector<double> lower;
    std::vector<double> upper;
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = 0.0;
    int evaluations = 0;
    bool converged = false;
};

using Objective = std::function<double(std::span<const double>)>;

/// Derivative-free minimisation (reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5). Non-finite objective values are treated as +inf.
NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0, const NelderMeadOptions& options = {});

}  // namespace hierfit::opt
