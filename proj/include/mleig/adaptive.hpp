#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mleig/estimators.hpp"

namespace mleig {

struct AdaptiveConfig {
    double omega = 0.25;
    int L0 = 2;
    long long N_star = 1000;
    double eps = 1e-2;
    int L_max = 20;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    int max_rounds = 50;

    void validate() const;
};

struct LevelRecord {
    int level = 0;
    long long N = 0;
    double mean = 0.0;
    double variance = 0.0;
    /// Mean cost per sample.
    double cost = 0.0;
    double kurtosis = 0.0;
    double mean_fine = 0.0;
    double variance_fine = 0.0;
};

/// State after one pass of draw / update / allocate / bias test.
struct RoundTrace {
    int L = 0;
    std::vector<long long> drawn;
    std::vector<long long> allocated;
    std::vector<double> variances;
    double alpha_hat = 0.0;
    bool bias_tested = false;
    bool bias_ok = false;
};

struct MlmcRunResult {
    double estimate = 0.0;
    std::vector<LevelRecord> levels;
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
    double total_cost = 0.0;
    std::vector<RoundTrace> iterations;

    int L() const { return static_cast<int>(levels.size()) - 1; }
    /// Sum over levels of variance / N.
    double estimator_variance() const;
};

struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& what, MlmcRunResult partial)
        : std::runtime_error(what), trace(std::move(partial)) {}
    MlmcRunResult trace;
};

/// N_l = ceil((1-omega)^-1 eps^-2 sqrt(V_l/C_l) sum_k sqrt(V_k C_k)), at least 1.
std::vector<long long> optimal_allocation(const std::vector<double>& variances,
                                          const std::vector<double>& costs, double eps, double omega);

struct Rates {
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
};

/// Least-squares slopes of log2|mean| and log2 var against level, for levels
/// 1..L (element 0 of each input is level 1). alpha_hat is floored at 0.5.
/// Throws InsufficientData when fewer than two levels are usable.
Rates estimate_rates(const std::vector<double>& level_means, const std::vector<double>& level_vars);

/// |mean_ZL| / (2^alpha - 1) <= sqrt(omega) eps.
bool bias_converged(double mean_ZL, double alpha_hat, double eps, double omega);

MlmcRunResult run_adaptive(const BayesModel& model, const EstimatorConfig& est_config,
                           const AdaptiveConfig& adapt_config);

/// C_L var(P_L) / ((1 - omega) eps^2).
double nmc_cost_model(double var_PL, double C_L, double eps, double omega);

}  // namespace mleig
