#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mleig/adaptive.hpp"
#include "mleig/models.hpp"

namespace mleig::cli {

enum class ModelKind { kLinear, kPk };
enum class EstimatorKind { kNmc, kMlmc };

struct RunConfig {
    ModelKind model = ModelKind::kLinear;
    LinearGaussianSpec linear = LinearGaussianSpec::reference(1);
    Schedule pk_scheme = Schedule::kBeta;
    PkSpec pk = PkSpec::reference(Schedule::kBeta);
    /// +1 or -1; -1 negates the PK forward map.
    double pk_sign = 1.0;
    EstimatorKind estimator = EstimatorKind::kMlmc;
    std::vector<double> eps;
    std::uint64_t seed = 0;
    double omega = 0.25;
    int L0 = 2;
    long long N_star = 1000;
    int M0 = 1;
    int L_max = 20;
    bool is_enabled = true;
    /// Also run a real NMC estimator next to each MLMC run.
    bool nmc_run = false;
    std::filesystem::path output_dir = ".";
    int diagnostics_levels = 8;
    long long diagnostics_samples = 20000;

    friend bool operator==(const RunConfig&, const RunConfig&);
};

/// Invalid configuration; key names the offending entry (empty for syntax errors).
struct ConfigError : std::runtime_error {
    ConfigError(std::string k, const std::string& what) : std::runtime_error(what), key(std::move(k)) {}
    std::string key;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& config);

BayesModel build_model(const RunConfig& config);

struct RateStudyResult {
    std::vector<LevelRecord> levels;
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
};

/// Samples levels 0..diagnostics_levels and writes levels.csv and summary.json.
RateStudyResult run_rate_study(const RunConfig& config, unsigned threads = 1);

struct EstimateRow {
    double eps = 0.0;
    double estimate = 0.0;
    double total_cost = 0.0;
    int L = 0;
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
    double nmc_model_cost = 0.0;
    std::vector<LevelRecord> levels;
    std::optional<NmcResult> nmc;
    long long nmc_N = 0;
};

/// Runs the configured estimator for every eps; writes runs.csv and
/// allocation.csv (and nmc.csv when nmc_run is set). On NonConvergence writes
/// trace.json and rethrows.
std::vector<EstimateRow> run_estimate(const RunConfig& config, unsigned threads = 1);

/// Writes contents to path through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mleig::cli
