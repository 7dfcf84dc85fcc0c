#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierfit/gamlss.hpp"
#include "hierfit/inference.hpp"
#include "hierfit/lmm.hpp"
#include "hierfit/simulator.hpp"

namespace hierfit::io {

using Json = nlohmann::ordered_json;

Json to_json(const lmm::LmmFit& fit, const data::LongTable& table);
Json to_json(const gamlss::GamlssFit& fit, const data::LongTable& table);
Json to_json(const inference::AnovaTable& table);
Json to_json(const inference::LrtResult& result);
Json to_json(const sim::RecoveryReport& report);

/// What a fit file carries back: enough to rebuild fitted means and
/// residuals on the original data.
struct FitRecord {
    std::string kind;
    data::ModelSpec spec;
    std::vector<std::string> column_labels;
    Eigen::VectorXd beta_raw;
    std::vector<std::string> level_labels;
    std::vector<std::map<std::string, double>> blups;
    double sigma2 = 1.0;
    std::optional<double> delta;
    double sigma_eta = 0.0;
    double nu_eta = 1.0;
    LinkSet links;
    double loglik = 0.0;
    int n_params = 0;
    bool converged = false;
    data::LevelOrder factor_levels;
};

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

/// Accepts a full fit file or a minimal {"loglik", "n_params"} object.
inference::ModelSummary summary_from_json(const Json& j);

FitRecord record_from_json(const Json& j);

struct Reconstruction {
    Eigen::VectorXd mu;         // conditional mean
    Eigen::VectorXd residuals;  // normalized quantile residuals
};

/// Recomputes conditional means and quantile residuals of a recorded fit on
/// its data.
Reconstruction reconstruct(const FitRecord& record, const data::LongTable& table);

}  // namespace hierfit::io
