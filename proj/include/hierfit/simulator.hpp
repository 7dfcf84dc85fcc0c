#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hierfit/model_spec.hpp"
#include "hierfit/table.hpp"

namespace hierfit::sim {

struct DesignLayout {
    int n_blocks = 4;
    int n_plots = 4;      // per block
    int n_subplots = 4;   // per plot
    int n_plants = 4;     // per subplot
    std::vector<double> time_points{30.0, 45.0, 60.0, 75.0, 90.0};
    std::vector<std::string> tension_levels{"15", "30", "45", "60"};
    std::vector<std::string> silicate_levels{"0", "6", "12", "24"};

    std::size_t n_rows() const;
};

/// Full truth of a simulated experiment. Fixed effects are given on the raw
/// scale (raw time powers) keyed by design column label, e.g.
/// beta.(Intercept), beta.tension30, beta.I(time^2); missing ones are 0.
/// For GG the linear predictor and random intercepts act on log(mu).
struct TruthSpec {
    DesignLayout design;
    std::string fixed = "block + tension*silicate*time + I(time^2) + I(time^3)";
    std::map<std::string, double> beta{{"(Intercept)", 10.0}, {"time", 0.5},      {"tension30", 2.0},
                                       {"tension45", 4.0},    {"tension60", 6.0}, {"silicate6", 1.0},
                                       {"silicate12", 2.0},   {"silicate24", 3.0}, {"I(time^2)", -0.002}};
    double sigma2_P = 25.0;
    double sigma2_SP = 16.0;
    double sigma2_SS = 9.0;
    double sigma2 = 4.0;
    std::optional<double> delta;
    Family family = Family::Normal;
    double gg_sigma = 0.2;
    double gg_nu = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
};

/// key = value lines; '#' starts a comment. Unknown keys raise InvalidSpec.
TruthSpec parse_truth(std::istream& in);
TruthSpec load_truth(const std::filesystem::path& path);

/// The balanced layout with heights set to 0. Labels are unique across the
/// whole experiment: plots 1..16, subplots 1..64, plants 1..256 by default.
data::LongTable layout(const DesignLayout& design);

/// Draws one experiment using a generator seeded with `seed` (spec.seed when
/// omitted).
data::LongTable simulate(const TruthSpec& spec);
data::LongTable simulate(const TruthSpec& spec, std::uint64_t seed);

/// Variance of the random intercept of a level name (plot, subplot, plant).
std::optional<double> truth_variance(const TruthSpec& spec, const std::string& level);

struct ParameterRecovery {
    std::string name;
    double truth = 0.0;
    double mean = 0.0;
    double bias = 0.0;
    double empirical_se = 0.0;
    /// Fraction of 95% normal intervals covering the truth; NaN without SEs.
    double coverage = 0.0;
    std::vector<double> estimates;
    std::vector<double> std_errors;
};

struct RecoveryReport {
    int n_reps = 0;
    int failures = 0;
    std::vector<std::string> errors;
    std::vector<ParameterRecovery> parameters;

    const ParameterRecovery& at(const std::string& name) const;
};

/// Simulates n_reps experiments (seeds spec.seed + index), fits `recipe` to
/// each and summarises recovery. Failed or non-converged fits are counted and
/// skipped. Replicates run on `threads` workers (0 = default pool size).
RecoveryReport replicate_study(const TruthSpec& spec, int n_reps, const data::ModelSpec& recipe, std::size_t threads = 0);

/// Worker count: `requested` if > 0, else hardware concurrency, capped by the
/// HIERFIT_THREADS environment variable.
std::size_t worker_count(std::size_t requested = 0);

/// Runs body(i) for i in [0, n) on a pool; exceptions are rethrown after all
/// workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace hierfit::sim
