#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "hierfit/design.hpp"
#include "hierfit/distributions.hpp"
#include "hierfit/error.hpp"
#include "hierfit/gamlss.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/simulator.hpp"

namespace hierfit::sim {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidSpec, "key '" + key + "' expects a number, got '" + value + "'");
    }
}

int to_count(const std::string& key, const std::string& value) {
    const double v = to_double(key, value);
    if (v != std::floor(v) || v < 1.0 || v > 1e6) {
        throw Error(ErrorKind::InvalidSpec, "key '" + key + "' expects a positive integer");
    }
    return static_cast<int>(v);
}

std::string label(int index) { return std::to_string(index + 1); }

}  // namespace

std::size_t DesignLayout::n_rows() const {
    return static_cast<std::size_t>(n_blocks) * static_cast<std::size_t>(n_plots) *
           static_cast<std::size_t>(n_subplots) * static_cast<std::size_t>(n_plants) * time_points.size();
}

void TruthSpec::validate() const {
    if (design.n_blocks < 1 || design.n_plots < 1 || design.n_subplots < 1 || design.n_plants < 1) {
        throw Error(ErrorKind::InvalidSpec, "layout counts must be >= 1");
    }
    if (design.time_points.empty()) throw Error(ErrorKind::InvalidSpec, "at least one time point is required");
    for (double t : design.time_points) {
        if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorKind::InvalidSpec, "time points must be > 0");
    }
    if (design.tension_levels.empty() || design.silicate_levels.empty()) {
        throw Error(ErrorKind::InvalidSpec, "treatment level lists must not be empty");
    }
    for (double v : {sigma2_P, sigma2_SP, sigma2_SS, sigma2}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidSpec, "variances must be finite and >= 0");
    }
    if (delta && !std::isfinite(*delta)) throw Error(ErrorKind::InvalidSpec, "delta must be finite");
    if (family == Family::GeneralizedGamma) {
        if (!(gg_sigma > 0.0) || std::abs(gg_nu) < dist::kMinAbsNu || !std::isfinite(gg_nu)) {
            throw Error(ErrorKind::InvalidSpec, "GG truth needs gg_sigma > 0 and |gg_nu| >= 1e-4");
        }
    }
}

TruthSpec parse_truth(std::istream& in) {
    TruthSpec spec;
    std::string line;
    int line_no = 0;
    bool explicit_beta = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::InvalidSpec, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "n_blocks") {
            spec.design.n_blocks = to_count(key, value);
        } else if (key == "n_plots") {
            spec.design.n_plots = to_count(key, value);
        } else if (key == "n_subplots") {
            spec.design.n_subplots = to_count(key, value);
        } else if (key == "n_plants") {
            spec.design.n_plants = to_count(key, value);
        } else if (key == "time_points") {
            spec.design.time_points.clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) spec.design.time_points.push_back(to_double(key, trim(item)));
        } else if (key == "family") {
            try {
                spec.family = parse_family(value);
            } catch (const Error& e) {
                throw Error(ErrorKind::InvalidSpec, e.what());
            }
        } else if (key == "fixed") {
            spec.fixed = value;
        } else if (key == "beta") {
            throw Error(ErrorKind::InvalidSpec, "use beta.<column label> = value");
        } else if (key.rfind("beta.", 0) == 0) {
            if (!explicit_beta) {
                // the first explicit coefficient replaces the defaults
                spec.beta.clear();
                explicit_beta = true;
            }
            spec.beta[key.substr(5)] = to_double(key, value);
        } else if (key == "sigma2_P") {
            spec.sigma2_P = to_double(key, value);
        } else if (key == "sigma2_SP") {
            spec.sigma2_SP = to_double(key, value);
        } else if (key == "sigma2_SS") {
            spec.sigma2_SS = to_double(key, value);
        } else if (key == "sigma2") {
            spec.sigma2 = to_double(key, value);
        } else if (key == "delta") {
            if (value == "none") {
                spec.delta.reset();
            } else {
                spec.delta = to_double(key, value);
            }
        } else if (key == "gg_sigma") {
            spec.gg_sigma = to_double(key, value);
        } else if (key == "gg_nu") {
            spec.gg_nu = to_double(key, value);
        } else if (key == "seed") {
            const double v = to_double(key, value);
            if (v < 0.0 || v != std::floor(v)) throw Error(ErrorKind::InvalidSpec, "seed must be a non-negative integer");
            spec.seed = static_cast<std::uint64_t>(v);
        } else {
            throw Error(ErrorKind::InvalidSpec, "unknown key '" + key + "' on line " + std::to_string(line_no));
        }
    }
    spec.validate();
    return spec;
}

TruthSpec load_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return parse_truth(in);
}

data::LongTable layout(const DesignLayout& d) {
    std::vector<data::Observation> rows;
    rows.reserve(d.n_rows());
    for (int b = 0; b < d.n_blocks; ++b) {
        for (int j = 0; j < d.n_plots; ++j) {
            const int plot = b * d.n_plots + j;
            for (int k = 0; k < d.n_subplots; ++k) {
                const int subplot = plot * d.n_subplots + k;
                for (int m = 0; m < d.n_plants; ++m) {
                    const int plant = subplot * d.n_plants + m;
                    for (double t : d.time_points) {
                        data::Observation o;
                        o.block = label(b);
                        o.plot = label(plot);
                        o.subplot = label(subplot);
                        o.plant = label(plant);
                        o.tension = d.tension_levels[static_cast<std::size_t>(j) % d.tension_levels.size()];
                        o.silicate = d.silicate_levels[static_cast<std::size_t>(k) % d.silicate_levels.size()];
                        o.time = t;
                        o.height = 0.0;
                        rows.push_back(std::move(o));
                    }
                }
            }
        }
    }
    return data::LongTable::from_rows(rows);
}

data::LongTable simulate(const TruthSpec& spec) { return simulate(spec, spec.seed); }

data::LongTable simulate(const TruthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const data::LongTable base = layout(spec.design);
    data::ModelSpec model;
    try {
        model = data::ModelSpec::parse("height ~ " + spec.fixed);
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidSpec, std::string("fixed: ") + e.what());
    }
    const data::DesignMatrices design = data::build_design(base, model);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design.p()));
    for (const auto& [name, value] : spec.beta) {
        const auto it = std::find(design.column_labels.begin(), design.column_labels.end(), name);
        if (it == design.column_labels.end()) {
            throw Error(ErrorKind::InvalidSpec, "beta." + name + " is not a column of the fixed design");
        }
        beta[it - design.column_labels.begin()] = value;
    }
    const Eigen::VectorXd eta = design.X_raw * beta;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto& d = spec.design;
    const int n_plots = d.n_blocks * d.n_plots;
    const int n_subplots = n_plots * d.n_subplots;
    const int n_plants = n_subplots * d.n_plants;
    std::vector<double> plot_effect(static_cast<std::size_t>(n_plots));
    std::vector<double> subplot_effect(static_cast<std::size_t>(n_subplots));
    std::vector<double> plant_effect(static_cast<std::size_t>(n_plants));
    for (double& e : plot_effect) e = std::sqrt(spec.sigma2_P) * z(rng);
    for (double& e : subplot_effect) e = std::sqrt(spec.sigma2_SP) * z(rng);
    for (double& e : plant_effect) e = std::sqrt(spec.sigma2_SS) * z(rng);

    const std::size_t per_plant = d.time_points.size();
    std::vector<data::Observation> rows;
    rows.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        const std::size_t plant = i / per_plant;
        const std::size_t subplot = plant / static_cast<std::size_t>(d.n_plants);
        const std::size_t plot = subplot / static_cast<std::size_t>(d.n_subplots);
        const double lp = eta[static_cast<Eigen::Index>(i)] + plot_effect[plot] + subplot_effect[subplot] + plant_effect[plant];
        data::Observation o = base.row(i);
        if (spec.family == Family::Normal) {
            const double scale = spec.delta ? std::pow(o.time, *spec.delta) : 1.0;
            o.height = lp + std::sqrt(spec.sigma2) * scale * z(rng);
        } else {
            const dist::FamilyParams p{std::exp(lp), spec.gg_sigma, spec.gg_nu};
            o.height = dist::sample(Family::GeneralizedGamma, p, 1, rng).front();
        }
        rows.push_back(std::move(o));
    }
    return data::LongTable::from_rows(rows);
}

std::optional<double> truth_variance(const TruthSpec& spec, const std::string& level) {
    if (level == "plot") return spec.sigma2_P;
    if (level == "subplot") return spec.sigma2_SP;
    if (level == "plant") return spec.sigma2_SS;
    return std::nullopt;
}

const ParameterRecovery& RecoveryReport::at(const std::string& name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return p;
    }
    throw Error(ErrorKind::UnknownTerm, "no recovered parameter '" + name + "'");
}

std::size_t worker_count(std::size_t requested) {
    std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HIERFIT_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

RecoveryReport replicate_study(const TruthSpec& spec, int n_reps, const data::ModelSpec& recipe, std::size_t threads) {
    if (n_reps < 2) throw Error(ErrorKind::InvalidSpec, "a replicate study needs at least 2 replicates");
    spec.validate();
    recipe.validate();

    struct Outcome {
        bool ok = false;
        std::string error;
        std::vector<std::string> names;
        std::vector<double> values;
        std::vector<double> ses;
    };
    std::vector<Outcome> outcomes(static_cast<std::size_t>(n_reps));
    parallel_for(outcomes.size(), worker_count(threads), [&](std::size_t r) {
        Outcome& out = outcomes[r];
        try {
            const data::LongTable table = simulate(spec, spec.seed + r);
            auto add = [&](const std::string& name, double v, double se) {
                out.names.push_back(name);
                out.values.push_back(v);
                out.ses.push_back(se);
            };
            const double nan = std::numeric_limits<double>::quiet_NaN();
            if (recipe.family == Family::Normal) {
                const lmm::LmmFit fit = lmm::fit_lmm(table, recipe);
                if (!fit.converged) throw Error(ErrorKind::NonConvergence, "fit did not converge");
                for (std::size_t j = 0; j < fit.design.p(); ++j) {
                    add("beta:" + fit.design.column_labels[j], fit.beta_raw[static_cast<Eigen::Index>(j)],
                        fit.std_errors_raw[static_cast<Eigen::Index>(j)]);
                }
                for (std::size_t l = 0; l < fit.design.levels.size(); ++l) {
                    add("var:" + fit.design.levels[l].name, fit.vc.level_variances[l], nan);
                }
                add("sigma2", fit.vc.sigma2, nan);
                if (fit.vc.delta) add("delta", *fit.vc.delta, nan);
            } else {
                const gamlss::GamlssFit fit = gamlss::fit_gamlss(table, recipe);
                if (!fit.converged) throw Error(ErrorKind::NonConvergence, "fit did not converge");
                for (std::size_t j = 0; j < fit.working.design.p(); ++j) {
                    add("beta:" + fit.working.design.column_labels[j], fit.mu_beta_raw[static_cast<Eigen::Index>(j)],
                        fit.std_errors_raw[static_cast<Eigen::Index>(j)]);
                }
                for (std::size_t l = 0; l < fit.working.design.levels.size(); ++l) {
                    add("var:" + fit.working.design.levels[l].name, fit.working.vc.level_variances[l], nan);
                }
                add("sigma", fit.sigma(), nan);
                add("nu", fit.nu(), nan);
            }
            out.ok = true;
        } catch (const Error& e) {
            out.error = "replicate " + std::to_string(r) + ": " + e.what();
        }
    });

    RecoveryReport report;
    report.n_reps = n_reps;
    const Outcome* first = nullptr;
    for (const auto& o : outcomes) {
        if (!o.ok) {
            ++report.failures;
            report.errors.push_back(o.error);
        } else if (!first) {
            first = &o;
        }
    }
    if (!first) return report;

    for (std::size_t k = 0; k < first->names.size(); ++k) {
        ParameterRecovery p;
        p.name = first->names[k];
        if (p.name.rfind("beta:", 0) == 0) {
            const auto it = spec.beta.find(p.name.substr(5));
            p.truth = it == spec.beta.end() ? 0.0 : it->second;
        } else if (p.name.rfind("var:", 0) == 0) {
            p.truth = truth_variance(spec, p.name.substr(4)).value_or(std::numeric_limits<double>::quiet_NaN());
        } else if (p.name == "sigma2") {
            p.truth = spec.sigma2;
        } else if (p.name == "delta") {
            p.truth = spec.delta.value_or(0.0);
        } else if (p.name == "sigma") {
            p.truth = spec.gg_sigma;
        } else if (p.name == "nu") {
            p.truth = spec.gg_nu;
        }
        std::size_t covered = 0;
        bool has_se = true;
        for (const auto& o : outcomes) {
            if (!o.ok) continue;
            p.estimates.push_back(o.values[k]);
            p.std_errors.push_back(o.ses[k]);
            if (std::isnan(o.ses[k])) {
                has_se = false;
            } else if (std::abs(o.values[k] - p.truth) <= 1.96 * o.ses[k]) {
                ++covered;
            }
        }
        const double m = static_cast<double>(p.estimates.size());
        for (double e : p.estimates) p.mean += e / m;
        double ss = 0.0;
        for (double e : p.estimates) ss += (e - p.mean) * (e - p.mean);
        p.empirical_se = m > 1.0 ? std::sqrt(ss / (m - 1.0)) : 0.0;
        p.bias = p.mean - p.truth;
        p.coverage = has_se ? static_cast<double>(covered) / m : std::numeric_limits<double>::quiet_NaN();
        report.parameters.push_back(std::move(p));
    }
    return report;
}

}  // namespace hierfit::sim
