#include "mleig/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mleig/errors.hpp"

namespace mleig {

namespace {

constexpr double kAlphaFloor = 0.5;

// Slope of the least-squares line through (x_i, y_i).
double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace

void AdaptiveConfig::validate() const {
    if (!(omega > 0.0 && omega < 1.0)) throw InvalidArgument("omega must lie in (0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
    if (L0 < 1) throw InvalidArgument("L0 must be >= 1");
    if (N_star < 2) throw InvalidArgument("N_star must be >= 2");
    if (L_max < L0) throw InvalidArgument("L_max must be >= L0");
}

double MlmcRunResult::estimator_variance() const {
    double v = 0.0;
    for (const auto& r : levels)
        if (r.N > 0) v += r.variance / static_cast<double>(r.N);
    return v;
}

std::vector<long long> optimal_allocation(const std::vector<double>& variances,
                                          const std::vector<double>& costs, double eps, double omega) {
    if (!(eps > 0.0)) throw InvalidArgument("optimal_allocation: eps must be positive");
    if (!(omega > 0.0 && omega < 1.0)) throw InvalidArgument("optimal_allocation: omega must lie in (0, 1)");
    if (variances.size() != costs.size()) throw InvalidArgument("optimal_allocation: size mismatch");
    double sum = 0.0;
    for (std::size_t l = 0; l < variances.size(); ++l) {
        if (variances[l] < 0.0 || !(costs[l] > 0.0))
            throw InvalidArgument("optimal_allocation: variances must be >= 0 and costs > 0");
        sum += std::sqrt(variances[l] * costs[l]);
    }
    std::vector<long long> n(variances.size());
    for (std::size_t l = 0; l < variances.size(); ++l) {
        const double raw = std::sqrt(variances[l] / costs[l]) * sum / ((1.0 - omega) * eps * eps);
        n[l] = std::max(1LL, static_cast<long long>(std::ceil(raw)));
    }
    return n;
}

Rates estimate_rates(const std::vector<double>& level_means, const std::vector<double>& level_vars) {
    if (level_means.size() != level_vars.size()) throw InvalidArgument("estimate_rates: size mismatch");
    std::vector<double> lm, ym, lv, yv;
    for (std::size_t i = 0; i < level_means.size(); ++i) {
        const double level = static_cast<double>(i + 1);
        const double am = std::abs(level_means[i]);
        if (am > 0.0 && std::isfinite(am)) {
            lm.push_back(level);
            ym.push_back(std::log2(am));
        }
        if (level_vars[i] > 0.0 && std::isfinite(level_vars[i])) {
            lv.push_back(level);
            yv.push_back(std::log2(level_vars[i]));
        }
    }
    if (lm.size() < 2 || lv.size() < 2)
        throw InsufficientData("estimate_rates: need two levels with nonzero mean and variance");
    return {std::max(kAlphaFloor, -ols_slope(lm, ym)), -ols_slope(lv, yv)};
}

bool bias_converged(double mean_ZL, double alpha_hat, double eps, double omega) {
    return std::abs(mean_ZL) / (std::exp2(alpha_hat) - 1.0) <= std::sqrt(omega) * eps;
}

double nmc_cost_model(double var_PL, double C_L, double eps, double omega) {
    return C_L * var_PL / ((1.0 - omega) * eps * eps);
}

MlmcRunResult run_adaptive(const BayesModel& model, const EstimatorConfig& est_config,
                           const AdaptiveConfig& cfg) {
    cfg.validate();
    std::vector<LevelStats> z_stats, p_stats;
    std::vector<long long> target;
    MlmcRunResult result;

    auto add_level = [&] {
        z_stats.emplace_back();
        p_stats.emplace_back();
        target.push_back(cfg.N_star);
    };
    for (int l = 0; l <= cfg.L0; ++l) add_level();

    auto snapshot = [&] {
        result.levels.clear();
        result.total_cost = 0.0;
        result.estimate = 0.0;
        for (std::size_t l = 0; l < z_stats.size(); ++l) {
            const auto& z = z_stats[l];
            const auto& p = p_stats[l];
            result.levels.push_back({static_cast<int>(l), z.count, z.mean(), z.variance(), z.mean_cost(),
                                     z.kurtosis(), p.mean(), p.variance()});
            result.total_cost += z.total_cost;
            result.estimate += z.mean();
        }
    };

    for (int round = 0;; ++round) {
        if (round >= cfg.max_rounds) {
            snapshot();
            throw NonConvergence("adaptive MLMC exceeded " + std::to_string(cfg.max_rounds) +
                                     " allocation rounds",
                                 result);
        }
        const int L = static_cast<int>(z_stats.size()) - 1;

        // 1. outstanding samples
        for (int l = 0; l <= L; ++l) {
            const long long missing = target[l] - z_stats[l].count;
            if (missing <= 0) continue;
            const auto batch =
                sample_level_batch(model, est_config, l, cfg.seed, z_stats[l].count, missing, cfg.threads);
            for (const auto& s : batch) {
                z_stats[l].add(s.value, s.cost);
                p_stats[l].add(s.fine);
            }
        }

        // 2-3. variances, costs and allocation
        std::vector<double> vars, costs;
        for (int l = 0; l <= L; ++l) {
            vars.push_back(z_stats[l].variance());
            costs.push_back(z_stats[l].mean_cost());
        }
        const auto alloc = optimal_allocation(vars, costs, cfg.eps, cfg.omega);
        bool need_more = false;
        for (int l = 0; l <= L; ++l) {
            if (alloc[l] > z_stats[l].count) need_more = true;
            target[l] = std::max(target[l], alloc[l]);
        }

        // 4. bias test on the finest level
        RoundTrace trace;
        trace.L = L;
        trace.allocated = alloc;
        trace.variances = vars;
        for (int l = 0; l <= L; ++l) trace.drawn.push_back(z_stats[l].count);

        int usable = 0;
        for (int l = 1; l <= L; ++l)
            if (z_stats[l].count >= 2) ++usable;
        if (usable >= 2) {
            std::vector<double> means, level_vars;
            for (int l = 1; l <= L; ++l) {
                means.push_back(z_stats[l].mean());
                level_vars.push_back(z_stats[l].variance());
            }
            double alpha = kAlphaFloor;
            try {
                alpha = estimate_rates(means, level_vars).alpha_hat;
            } catch (const InsufficientData&) {
            }
            trace.alpha_hat = alpha;
            trace.bias_tested = true;
            trace.bias_ok = bias_converged(z_stats[L].mean(), alpha, cfg.eps, cfg.omega);
        }
        result.iterations.push_back(trace);

        if (!trace.bias_ok) {
            if (L + 1 > cfg.L_max) {
                snapshot();
                throw NonConvergence("adaptive MLMC exceeded L_max = " + std::to_string(cfg.L_max), result);
            }
            add_level();
            continue;
        }
        if (!need_more) break;
    }

    snapshot();
    std::vector<double> means, level_vars;
    for (std::size_t l = 1; l < result.levels.size(); ++l) {
        means.push_back(result.levels[l].mean);
        level_vars.push_back(result.levels[l].variance);
    }
    try {
        const Rates r = estimate_rates(means, level_vars);
        result.alpha_hat = r.alpha_hat;
        result.beta_hat = r.beta_hat;
    } catch (const InsufficientData&) {
        result.alpha_hat = std::numeric_limits<double>::quiet_NaN();
        result.beta_hat = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

}  // namespace mleig
