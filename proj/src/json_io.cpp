#include <cmath>
#include <fstream>

#include "hierfit/design.hpp"
#include "hierfit/distributions.hpp"
#include "hierfit/error.hpp"
#include "hierfit/json_io.hpp"

namespace hierfit::io {

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json factor_levels(const data::LongTable& table) {
    Json out = Json::object();
    for (auto name : data::kFactorNames) out[std::string(name)] = table.factor(name).levels;
    return out;
}

Json coefficients(const data::DesignMatrices& design, const Eigen::VectorXd& beta_raw, const Eigen::VectorXd& se) {
    Json out = Json::array();
    for (const auto& term : design.column_map) {
        for (std::size_t j = term.begin; j < term.end; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            out.push_back({{"term", term.label},
                           {"label", design.column_labels[j]},
                           {"estimate", number(beta_raw[jj])},
                           {"std_error", number(se[jj])}});
        }
    }
    return out;
}

Json blups(const data::DesignMatrices& design, const std::vector<Eigen::VectorXd>& values) {
    Json out = Json::object();
    for (std::size_t l = 0; l < design.levels.size(); ++l) {
        Json level = Json::object();
        for (std::size_t g = 0; g < design.levels[l].n_groups(); ++g) {
            level[design.levels[l].group_labels[g]] = number(values[l][static_cast<Eigen::Index>(g)]);
        }
        out[design.levels[l].path_label] = std::move(level);
    }
    return out;
}

Json variance_components(const lmm::LmmFit& fit) {
    Json out = Json::array();
    for (std::size_t l = 0; l < fit.design.levels.size(); ++l) {
        out.push_back({{"level", fit.design.levels[l].path_label},
                       {"name", fit.design.levels[l].name},
                       {"variance", number(fit.vc.level_variances[l])},
                       {"boundary", static_cast<bool>(fit.at_boundary[l])}});
    }
    return out;
}

Json common(const lmm::LmmFit& fit, const data::ModelSpec& spec, const data::LongTable& table) {
    Json j;
    j["model"] = spec.to_string();
    j["family"] = std::string(family_code(spec.family));
    j["varfunc"] = spec.power_covariate ? Json("power(" + *spec.power_covariate + ")") : Json(nullptr);
    j["nobs"] = fit.design.n();
    j["factor_levels"] = factor_levels(table);
    j["time_scaling"] = {{"center", fit.design.time_scaling.center}, {"scale", fit.design.time_scaling.scale}};
    return j;
}

}  // namespace

Json to_json(const lmm::LmmFit& fit, const data::LongTable& table) {
    Json j;
    j["kind"] = "lmm";
    j.update(common(fit, fit.spec, table));
    j["coefficients"] = coefficients(fit.design, fit.beta_raw, fit.std_errors_raw);
    j["variance_components"] = variance_components(fit);
    j["residual_variance"] = number(fit.vc.sigma2);
    j["delta"] = fit.vc.delta ? number(*fit.vc.delta) : Json(nullptr);
    j["blups"] = blups(fit.design, fit.blups);
    j["loglik"] = number(fit.loglik);
    j["n_params"] = fit.n_params;
    j["aic"] = number(inference::aic(fit.loglik, fit.n_params));
    j["converged"] = fit.converged;
    j["evaluations"] = fit.evaluations;
    return j;
}

Json to_json(const gamlss::GamlssFit& fit, const data::LongTable& table) {
    Json j;
    j["kind"] = "gamlss";
    j.update(common(fit.working, fit.spec, table));
    j["coefficients"] = coefficients(fit.working.design, fit.mu_beta_raw, fit.std_errors_raw);
    j["variance_components"] = variance_components(fit.working);
    j["residual_variance"] = number(fit.working.vc.sigma2);
    j["delta"] = nullptr;
    j["blups"] = blups(fit.working.design, fit.mu_blups);
    j["family_parameters"] = {{"name", std::string(family_code(fit.family))},
                              {"sigma_eta", number(fit.sigma_eta)},
                              {"nu_eta", number(fit.nu_eta)},
                              {"sigma", number(fit.sigma())},
                              {"nu", number(fit.nu())},
                              {"links",
                               {{"mu", std::string(link_name(fit.links.mu))},
                                {"sigma", std::string(link_name(fit.links.sigma))},
                                {"nu", std::string(link_name(fit.links.nu))}}}};
    j["global_deviance"] = number(fit.global_deviance);
    j["iterations"] = fit.iterations;
    j["loglik"] = number(fit.loglik);
    j["n_params"] = fit.n_params;
    j["aic"] = number(inference::aic(fit.loglik, fit.n_params));
    j["converged"] = fit.converged;
    return j;
}

Json to_json(const inference::AnovaTable& table) {
    Json rows = Json::array();
    for (const auto& r : table.rows) {
        rows.push_back({{"term", r.term},
                        {"stratum", r.stratum},
                        {"num_df", r.num_df},
                        {"den_df", r.den_df},
                        {"F", number(r.F)},
                        {"p", number(r.p)}});
    }
    return rows;
}

Json to_json(const inference::LrtResult& r) {
    return {{"loglik0", r.loglik0}, {"df0", r.df0},       {"loglik1", r.loglik1},
            {"df1", r.df1},         {"statistic", r.statistic}, {"delta_df", r.delta_df},
            {"p", r.p},             {"aic0", inference::aic(r.loglik0, r.df0)},
            {"aic1", inference::aic(r.loglik1, r.df1)}};
}

Json to_json(const sim::RecoveryReport& report) {
    Json params = Json::array();
    for (const auto& p : report.parameters) {
        params.push_back({{"name", p.name},
                          {"truth", number(p.truth)},
                          {"mean", number(p.mean)},
                          {"bias", number(p.bias)},
                          {"empirical_se", number(p.empirical_se)},
                          {"coverage", number(p.coverage)}});
    }
    return {{"n_reps", report.n_reps}, {"failures", report.failures}, {"errors", report.errors}, {"parameters", params}};
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_json(const Json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inference::ModelSummary summary_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("loglik") || !j.contains("n_params") || !j["loglik"].is_number() ||
        !j["n_params"].is_number_integer()) {
        throw Error(ErrorKind::ParseError, "fit file needs numeric 'loglik' and integer 'n_params'");
    }
    return {j["loglik"].get<double>(), j["n_params"].get<int>()};
}

FitRecord record_from_json(const Json& j) {
    try {
        FitRecord r;
        r.kind = j.at("kind").get<std::string>();
        r.spec = data::ModelSpec::parse(j.at("model").get<std::string>());
        for (const auto& c : j.at("coefficients")) r.column_labels.push_back(c.at("label").get<std::string>());
        r.beta_raw.resize(static_cast<Eigen::Index>(r.column_labels.size()));
        Eigen::Index k = 0;
        for (const auto& c : j.at("coefficients")) r.beta_raw[k++] = c.at("estimate").get<double>();
        for (const auto& [level, groups] : j.at("blups").items()) {
            r.level_labels.push_back(level);
            std::map<std::string, double> values;
            for (const auto& [g, v] : groups.items()) values[g] = v.get<double>();
            r.blups.push_back(std::move(values));
        }
        r.sigma2 = j.at("residual_variance").get<double>();
        if (!j.at("delta").is_null()) r.delta = j.at("delta").get<double>();
        r.links = LinkSet::defaults(r.spec.family);
        if (j.contains("family_parameters")) {
            const auto& fp = j.at("family_parameters");
            r.sigma_eta = fp.at("sigma_eta").get<double>();
            r.nu_eta = fp.at("nu_eta").get<double>();
            const auto link = [](const std::string& s) { return s == "log" ? Link::Log : Link::Identity; };
            r.links.mu = link(fp.at("links").at("mu").get<std::string>());
            r.links.sigma = link(fp.at("links").at("sigma").get<std::string>());
            r.links.nu = link(fp.at("links").at("nu").get<std::string>());
        }
        r.loglik = j.at("loglik").get<double>();
        r.n_params = j.at("n_params").get<int>();
        r.converged = j.at("converged").get<bool>();
        for (const auto& [name, levels] : j.at("factor_levels").items()) {
            r.factor_levels[name] = levels.get<std::vector<std::string>>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed fit file: ") + e.what());
    }
}

Reconstruction reconstruct(const FitRecord& record, const data::LongTable& table) {
    const data::DesignMatrices design = data::build_design(table, record.spec);
    if (design.column_labels != record.column_labels) {
        throw Error(ErrorKind::InvalidSpec, "fit coefficients do not match the design built from the data");
    }
    Eigen::VectorXd eta = design.X_raw * record.beta_raw;
    for (std::size_t l = 0; l < design.levels.size(); ++l) {
        const auto& level = design.levels[l];
        std::size_t match = record.level_labels.size();
        for (std::size_t m = 0; m < record.level_labels.size(); ++m) {
            if (record.level_labels[m] == level.path_label) match = m;
        }
        if (match == record.level_labels.size()) {
            throw Error(ErrorKind::UnknownLevel, "fit file has no predictions for level " + level.path_label);
        }
        for (std::size_t i = 0; i < level.group_of_row.size(); ++i) {
            const auto& g = level.group_labels[static_cast<std::size_t>(level.group_of_row[i])];
            const auto it = record.blups[match].find(g);
            if (it == record.blups[match].end()) {
                throw Error(ErrorKind::UnknownLevel, "no prediction for group " + g + " of " + level.path_label);
            }
            eta[static_cast<Eigen::Index>(i)] += it->second;
        }
    }
    Reconstruction out;
    out.mu.resize(eta.size());
    out.residuals.resize(eta.size());
    const auto& y = table.height();
    const auto& time = table.time();
    const bool lmm = record.kind == "lmm";
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        dist::FamilyParams p;
        if (lmm) {
            p.mu = eta[i];
            const double v = record.delta && record.spec.power_covariate ? std::pow(time[ii], *record.delta) : 1.0;
            p.sigma = std::sqrt(record.sigma2) * v;
        } else {
            p.mu = dist::inverse_link(record.links.mu, eta[i]);
            p.sigma = dist::inverse_link(record.links.sigma, record.sigma_eta);
            p.nu = dist::inverse_link(record.links.nu, record.nu_eta);
        }
        out.mu[i] = p.mu;
        out.residuals[i] = dist::quantile_residual(record.spec.family, p, y[ii]);
    }
    return out;
}

}  // namespace hierfit::io
