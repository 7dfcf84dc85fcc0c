#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "hierfit/cli.hpp"
#include "hierfit/diagnostics.hpp"
#include "hierfit/gamlss.hpp"
#include "hierfit/inference.hpp"
#include "hierfit/json_io.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/simulator.hpp"

namespace fs = std::filesystem;

namespace hierfit::cli {

namespace {

using io::Json;
using Clock = std::chrono::steady_clock;

struct Manifest {
    std::string command;
    std::vector<std::string> inputs;
    std::string model;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> outputs;
    Clock::time_point started = Clock::now();

    void write(const fs::path& dir) const {
        const double wall = std::chrono::duration<double>(Clock::now() - started).count();
        Json j;
        j["command"] = command;
        j["inputs"] = inputs;
        j["model"] = model.empty() ? Json(nullptr) : Json(model);
        j["seed"] = seed ? Json(*seed) : Json(nullptr);
        j["tool_version"] = std::string(kToolVersion);
        j["outputs"] = outputs;
        j["wall_time_seconds"] = wall;
        io::write_json(j, dir / "manifest.json");
    }
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
}

void write_series(const fs::path& path, const std::string& header, const diagnostics::Series& s) {
    std::string text = header + "\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) text += num(s.x[i]) + "," + num(s.y[i]) + "\n";
    write_text(path, text);
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

/// "factor=a,b,c" items.
data::LevelOrder parse_levels(const std::vector<std::string>& items) {
    data::LevelOrder order;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::InvalidSpec, "--levels expects factor=a,b,c");
        std::vector<std::string> levels;
        std::string rest = item.substr(eq + 1);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            const auto comma = rest.find(',', pos);
            const std::string level = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (level.empty()) throw Error(ErrorKind::InvalidSpec, "empty level in --levels " + item);
            levels.push_back(level);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        order[item.substr(0, eq)] = std::move(levels);
    }
    return order;
}

struct SimulateArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    int reps = 1;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    Manifest m;
    m.command = "simulate";
    m.seed = a.seed;
    sim::TruthSpec spec;
    if (!a.config.empty()) {
        spec = sim::load_truth(a.config);
        m.inputs.push_back(a.config);
    }
    spec.seed = a.seed;
    spec.validate();
    if (a.reps < 1) throw Error(ErrorKind::InvalidSpec, "--reps must be >= 1");
    const fs::path dir(a.out);
    make_dir(dir);
    if (a.reps == 1) {
        data::write_csv(sim::simulate(spec), dir / "data.csv");
        m.outputs.push_back("data.csv");
    } else {
        std::vector<std::string> names(static_cast<std::size_t>(a.reps));
        sim::parallel_for(names.size(), sim::worker_count(), [&](std::size_t r) {
            char name[32];
            std::snprintf(name, sizeof name, "rep_%04zu.csv", r + 1);
            data::write_csv(sim::simulate(spec, spec.seed + r), dir / name);
            names[r] = name;
        });
        m.outputs = names;
    }
    m.write(dir);
    out << "wrote " << m.outputs.size() << " data set(s) of " << spec.design.n_rows() << " rows to " << dir.string()
        << "\n";
    return Ok;
}

struct FitArgs {
    std::string data;
    std::string model;
    std::string family;
    std::string varfunc;
    std::vector<std::string> levels;
    std::string out;
};

data::ModelSpec spec_from(const FitArgs& a) {
    data::ModelSpec spec = data::ModelSpec::parse(a.model);
    if (!a.family.empty()) {
        try {
            spec.set_family(parse_family(a.family));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidSpec) throw;
            throw Error(ErrorKind::InvalidSpec, e.what());
        }
    }
    if (!a.varfunc.empty()) {
        if (a.varfunc == "none") {
            spec.power_covariate.reset();
        } else if (a.varfunc.rfind("power:", 0) == 0 && a.varfunc.size() > 6) {
            spec.power_covariate = a.varfunc.substr(6);
        } else {
            throw Error(ErrorKind::InvalidSpec, "--varfunc expects power:<covariate> or none");
        }
    }
    spec.validate();
    return spec;
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
    Manifest m;
    m.command = "fit";
    m.inputs.push_back(a.data);
    const data::ModelSpec spec = spec_from(a);
    m.model = spec.to_string();
    const data::LongTable table = data::ingest_csv(a.data, {}, parse_levels(a.levels));
    const fs::path dir(a.out);

    Json fit_json;
    std::optional<inference::AnovaTable> anova;
    bool converged;
    inference::ModelSummary ms;
    if (spec.family == Family::Normal) {
        const lmm::LmmFit fit = lmm::fit_lmm(table, spec);
        fit_json = io::to_json(fit, table);
        converged = fit.converged;
        ms = inference::summary(fit);
        if (converged) anova = inference::sequential_f(fit);
    } else {
        const gamlss::GamlssFit fit = gamlss::fit_gamlss(table, spec);
        fit_json = io::to_json(fit, table);
        converged = fit.converged;
        ms = inference::summary(fit);
        if (converged) anova = inference::sequential_f(fit);
    }
    make_dir(dir);
    io::write_json(fit_json, dir / "fit.json");
    m.outputs.push_back("fit.json");
    if (anova) {
        write_text(dir / "anova.txt", anova->to_text());
        io::write_json(io::to_json(*anova), dir / "anova.json");
        m.outputs.push_back("anova.txt");
        m.outputs.push_back("anova.json");
        out << anova->to_text();
    }
    m.write(dir);
    char line[160];
    std::snprintf(line, sizeof line, "logLik %.4f  n_params %d  AIC %.4f  converged %s\n",
                  ms.loglik, ms.n_params, inference::aic(ms),
                  converged ? "yes" : "no");
    out << line;
    if (!converged) {
        out << "fit did not converge; results written with converged = false\n";
        return Numerical;
    }
    return Ok;
}

int cmd_test(const FitArgs& a, std::ostream& out) {
    Manifest m;
    m.command = "test";
    m.inputs.push_back(a.data);
    const data::ModelSpec spec = spec_from(a);
    m.model = spec.to_string();
    const data::LongTable table = data::ingest_csv(a.data, {}, parse_levels(a.levels));
    const inference::AnovaTable anova = spec.family == Family::Normal
                                            ? inference::sequential_f(lmm::fit_lmm(table, spec))
                                            : inference::sequential_f(gamlss::fit_gamlss(table, spec));
    const fs::path dir(a.out);
    make_dir(dir);
    write_text(dir / "anova.txt", anova.to_text());
    io::write_json(io::to_json(anova), dir / "anova.json");
    m.outputs = {"anova.txt", "anova.json"};
    m.write(dir);
    out << anova.to_text();
    return Ok;
}

struct CompareArgs {
    std::string fit0;
    std::string fit1;
    std::string out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    Manifest m;
    m.command = "compare";
    m.inputs = {a.fit0, a.fit1};
    const inference::ModelSummary s0 = io::summary_from_json(io::read_json(a.fit0));
    const inference::ModelSummary s1 = io::summary_from_json(io::read_json(a.fit1));
    const inference::LrtResult r = inference::lrt(s0, s1);
    out << r.to_text();
    if (!a.out.empty()) {
        const fs::path dir(a.out);
        make_dir(dir);
        io::write_json(io::to_json(r), dir / "lrt.json");
        write_text(dir / "lrt.txt", r.to_text());
        m.outputs = {"lrt.json", "lrt.txt"};
        m.write(dir);
    }
    return Ok;
}

struct DiagnoseArgs {
    std::string fit;
    std::string data;
    std::string wp_by;
    std::size_t wp_k = 1;
    std::string out;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
    Manifest m;
    m.command = "diagnose";
    m.inputs = {a.fit, a.data};
    const io::FitRecord record = io::record_from_json(io::read_json(a.fit));
    m.model = record.spec.to_string();
    const data::LongTable table = data::ingest_csv(a.data, {}, record.factor_levels);
    const io::Reconstruction rec = io::reconstruct(record, table);
    const std::span<const double> resid(rec.residuals.data(), static_cast<std::size_t>(rec.residuals.size()));
    const std::span<const double> mu(rec.mu.data(), static_cast<std::size_t>(rec.mu.size()));

    std::vector<double> covariate;
    if (a.wp_by.empty()) {
        if (a.wp_k != 1) throw Error(ErrorKind::InvalidSpec, "--wp-k needs --wp-by");
    } else if (table.has_covariate(a.wp_by)) {
        const auto c = table.covariate(a.wp_by);
        covariate.assign(c.begin(), c.end());
    } else if (table.has_factor(a.wp_by)) {
        for (int code : table.factor(a.wp_by).codes) covariate.push_back(code);
    } else {
        throw Error(ErrorKind::UnknownTerm, "unknown worm-plot covariate '" + a.wp_by + "'");
    }
    const std::vector<diagnostics::WormPanel> panels =
        a.wp_by.empty() ? std::vector<diagnostics::WormPanel>{diagnostics::worm_panel(resid)}
                        : diagnostics::worm_panels_by(resid, covariate, a.wp_k, a.wp_by);
    const diagnostics::ResidualSummary summary = diagnostics::residual_summary(resid, mu, table.time());

    const fs::path dir(a.out);
    make_dir(dir);
    write_series(dir / "residuals_vs_fitted.csv", "fitted,residual", summary.vs_fitted);
    write_series(dir / "residuals_vs_time.csv", "time,residual", summary.vs_covariate);
    write_series(dir / "residual_density.csv", "residual,density", summary.density);
    write_series(dir / "residual_qq.csv", "theoretical,sample", summary.qq);
    m.outputs = {"residuals_vs_fitted.csv", "residuals_vs_time.csv", "residual_density.csv", "residual_qq.csv"};

    std::string cubic = "panel,covariate,lo,hi,n,b0,b1,b2,b3,mean_misfit,variance_misfit,skewness_misfit,kurtosis_misfit\n";
    std::string report = "panel  interval                 b0       b1       b2       b3   misfits\n";
    for (std::size_t k = 0; k < panels.size(); ++k) {
        const auto& p = panels[k];
        const std::string id = std::to_string(k + 1);
        std::string points = "x,y,band\n";
        for (std::size_t i = 0; i < p.size(); ++i) points += num(p.x[i]) + "," + num(p.y[i]) + "," + num(p.band[i]) + "\n";
        write_text(dir / ("worm_panel_" + id + ".csv"), points);
        write_text(dir / ("worm_panel_" + id + ".svg"), diagnostics::worm_svg({p}));
        m.outputs.push_back("worm_panel_" + id + ".csv");
        m.outputs.push_back("worm_panel_" + id + ".svg");
        const auto& f = p.flags;
        cubic += id + "," + (p.interval.whole_sample ? "" : p.interval.covariate) + "," +
                 (p.interval.whole_sample ? "" : num(p.interval.lo)) + "," +
                 (p.interval.whole_sample ? "" : num(p.interval.hi)) + "," + std::to_string(p.size()) + "," +
                 num(p.cubic.b0) + "," + num(p.cubic.b1) + "," + num(p.cubic.b2) + "," + num(p.cubic.b3) + "," +
                 (f.mean_misfit ? "1" : "0") + "," + (f.variance_misfit ? "1" : "0") + "," +
                 (f.skewness_misfit ? "1" : "0") + "," + (f.kurtosis_misfit ? "1" : "0") + "\n";
        char line[200];
        const std::string interval =
            p.interval.whole_sample ? "all" : p.interval.covariate + " [" + num(p.interval.lo) + ", " + num(p.interval.hi) + "]";
        std::string misfits;
        if (f.mean_misfit) misfits += " mean";
        if (f.variance_misfit) misfits += " variance";
        if (f.skewness_misfit) misfits += " skewness";
        if (f.kurtosis_misfit) misfits += " kurtosis";
        std::snprintf(line, sizeof line, "%-6s %-22s %8.4f %8.4f %8.4f %8.4f  %s\n", id.c_str(), interval.c_str(),
                      p.cubic.b0, p.cubic.b1, p.cubic.b2, p.cubic.b3, misfits.empty() ? "none" : misfits.c_str() + 1);
        report += line;
    }
    write_text(dir / "worm_cubic.csv", cubic);
    write_text(dir / "worm.svg", diagnostics::worm_svg(panels));
    m.outputs.push_back("worm_cubic.csv");
    m.outputs.push_back("worm.svg");

    Json sw;
    if (resid.size() <= 5000) {
        const inference::ShapiroWilk test = inference::shapiro_wilk(resid);
        sw = {{"n", resid.size()}, {"W", test.W}, {"p", test.p}};
        char line[120];
        std::snprintf(line, sizeof line, "Shapiro-Wilk W = %.5f, p = %.4g (n = %zu)\n", test.W, test.p, resid.size());
        report += line;
    } else {
        sw = {{"n", resid.size()}, {"W", nullptr}, {"p", nullptr}, {"note", "more than 5000 residuals"}};
        report += "Shapiro-Wilk not computed: more than 5000 residuals\n";
    }
    io::write_json(sw, dir / "shapiro.json");
    write_text(dir / "diagnostics.txt", report);
    m.outputs.push_back("shapiro.json");
    m.outputs.push_back("diagnostics.txt");
    m.write(dir);
    out << report;
    return Ok;
}

}  // namespace

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotNested:
            return InvalidComparison;
        case ErrorKind::NonConvergence:
        case ErrorKind::DomainError:
        case ErrorKind::DivergedWeights:
        case ErrorKind::NotConverged:
        case ErrorKind::NotPositiveDefinite:
            return Numerical;
        default:
            return UserError;
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mixed models and mixed GAMLSS for split-plot experiments with subsampling", "hierfit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "simulate experiments from a truth config");
    simulate->add_option("--config", sa.config, "key = value truth file (defaults when omitted)")->check(CLI::ExistingFile);
    simulate->add_option("--seed", sa.seed, "random seed")->required();
    simulate->add_option("--out", sa.out, "output directory")->required();
    simulate->add_option("--reps", sa.reps, "number of replicate data sets");

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit a mixed model or mixed GAMLSS");
    fit->add_option("--data", fa.data, "long-format CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", fa.model, "model specification")->required();
    fit->add_option("--family", fa.family, "NO or GG (overrides the model text)");
    fit->add_option("--varfunc", fa.varfunc, "power:time or none");
    fit->add_option("--levels", fa.levels, "factor level order, factor=a,b,c (repeatable)");
    fit->add_option("--out", fa.out, "output directory")->required();

    FitArgs ta;
    auto* test = app.add_subcommand("test", "sequential F-tests of the fixed terms");
    test->add_option("--data", ta.data, "long-format CSV")->required()->check(CLI::ExistingFile);
    test->add_option("--model", ta.model, "model specification")->required();
    test->add_option("--family", ta.family, "NO or GG (overrides the model text)");
    test->add_option("--varfunc", ta.varfunc, "power:time or none");
    test->add_option("--levels", ta.levels, "factor level order, factor=a,b,c (repeatable)");
    test->add_option("--out", ta.out, "output directory")->required();

    CompareArgs ca;
    auto* compare = app.add_subcommand("compare", "likelihood-ratio test and AIC of two nested fits");
    compare->add_option("fit0", ca.fit0, "smaller model fit JSON")->required()->check(CLI::ExistingFile);
    compare->add_option("fit1", ca.fit1, "larger model fit JSON")->required()->check(CLI::ExistingFile);
    compare->add_option("--out", ca.out, "optional output directory");

    DiagnoseArgs da;
    auto* diagnose = app.add_subcommand("diagnose", "residual summaries, worm plots and Shapiro-Wilk");
    diagnose->add_option("--fit", da.fit, "fit JSON")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--data", da.data, "CSV the fit was made on")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--wp-by", da.wp_by, "covariate for multiple worm plots");
    diagnose->add_option("--wp-k", da.wp_k, "number of worm-plot panels");
    diagnose->add_option("--out", da.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : UserError;
    }

    try {
        if (*simulate) return cmd_simulate(sa, out);
        if (*fit) return cmd_fit(fa, out);
        if (*test) return cmd_test(ta, out);
        if (*compare) return cmd_compare(ca, out);
        if (*diagnose) return cmd_diagnose(da, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return UserError;
    }
    return UserError;
}

}  // namespace hierfit::cli
