#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hierfit/nelder_mead.hpp"

namespace hierfit::opt {

namespace {

struct Vertex {
    std::vector<double> x;
    double f;
};

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0, const NelderMeadOptions& options) {
    const std::size_t dim = x0.size();
    NelderMeadResult result;
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    auto project = [&](std::vector<double>& x) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (!options.lower.empty()) x[j] = std::max(x[j], options.lower[j]);
            if (!options.upper.empty()) x[j] = std::min(x[j], options.upper[j]);
        }
    };
    project(x0);

    if (dim == 0) {
        result.f = eval(x0);
        result.x = std::move(x0);
        result.converged = true;
        return result;
    }

    std::vector<Vertex> simplex;
    simplex.reserve(dim + 1);
    simplex.push_back({x0, eval(x0)});
    for (std::size_t j = 0; j < dim; ++j) {
        std::vector<double> x = x0;
        const double step = options.initial_step.empty() ? 1.0 : options.initial_step[j];
        x[j] += step;
        // step inwards when the box would flatten the simplex
        if (!options.upper.empty() && x[j] > options.upper[j]) x[j] = x0[j] - step;
        project(x);
        simplex.push_back({x, eval(x)});
    }

    std::vector<double> centroid(dim);
    auto point = [&](double t, const std::vector<double>& worst) {
        std::vector<double> out(dim);
        for (std::size_t j = 0; j < dim; ++j) out[j] = centroid[j] + t * (worst[j] - centroid[j]);
        project(out);
        return out;
    };

    while (true) {
        // stable sort keeps earlier vertices first among ties
        std::stable_sort(simplex.begin(), simplex.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        const Vertex& best = simplex.front();
        double size = 0.0;
        for (std::size_t i = 1; i <= dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) size = std::max(size, std::abs(simplex[i].x[j] - best.x[j]));
        }
        const double spread = simplex.back().f - best.f;
        if (size < options.x_tol && spread < options.f_tol) {
            result.converged = true;
            break;
        }
        if (result.evaluations >= options.max_evaluations) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[i].x[j];
        }
        for (double& c : centroid) c /= static_cast<double>(dim);

        Vertex& worst = simplex.back();
        const double f_second = simplex[dim - 1].f;

        std::vector<double> xr = point(-1.0, worst.x);
        const double fr = eval(xr);
        if (fr < best.f) {
            std::vector<double> xe = point(-2.0, worst.x);
            const double fe = eval(xe);
            if (fe < fr) {
                worst = {std::move(xe), fe};
            } else {
                worst = {std::move(xr), fr};
            }
            continue;
        }
        if (fr < f_second) {
            worst = {std::move(xr), fr};
            continue;
        }
        if (fr < worst.f) {
            std::vector<double> xc = point(-0.5, worst.x);
            const double fc = eval(xc);
            if (fc <= fr) {
                worst = {std::move(xc), fc};
                continue;
            }
        } else {
            std::vector<double> xc = point(0.5, worst.x);
            const double fc = eval(xc);
            if (fc <= worst.f) {
                worst = {std::move(xc), fc};
                continue;
            }
        }
        for (std::size_t i = 1; i <= dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                simplex[i].x[j] = simplex[0].x[j] + 0.5 * (simplex[i].x[j] - simplex[0].x[j]);
            }
            simplex[i].f = eval(simplex[i].x);
        }
    }

    result.x = simplex.front().x;
    result.f = simplex.front().f;
    return result;
}

}  // namespace hierfit::opt
