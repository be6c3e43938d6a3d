#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mleig/laplace.hpp"
#include "mleig/model.hpp"

namespace mleig {

enum class Coupling {
    kAntithetic,
    /// P_l - P_{l-1} reusing the first half of the inner samples. Test oracle only.
    kPlain,
};

struct EstimatorConfig {
    int M0 = 1;
    bool use_is = true;
    Coupling coupling = Coupling::kAntithetic;

    long long inner_samples(int level) const { return static_cast<long long>(M0) << level; }
};

/// One realization of Z_l, together with the P_l computed from the same draws.
struct LevelSample {
    double value = 0.0;
    double fine = 0.0;
    int level = 0;
    double cost = 0.0;
    /// The inner average would be exactly zero in double precision.
    bool linear_underflow = false;
    /// The Laplace fit failed and the prior was used as proposal.
    bool is_fallback = false;
};

/// Streaming power sums of one level's samples.
struct LevelStats {
    long long count = 0;
    double sum1 = 0.0;
    double sum2 = 0.0;
    double sum3 = 0.0;
    double sum4 = 0.0;
    double total_cost = 0.0;

    void add(double value, double cost = 0.0);
    LevelStats& merge(const LevelStats& other);

    double mean() const;
    /// Unbiased sample variance, clamped at 0; 0 when count < 2.
    double variance() const;
    /// Fourth central moment over squared variance; NaN when count < 4 or variance is 0.
    double kurtosis() const;
    double mean_cost() const { return count > 0 ? total_cost / static_cast<double>(count) : 0.0; }
};

LevelStats accumulate(LevelStats stats, const LevelSample& s);
LevelStats merge(LevelStats a, const LevelStats& b);

/// Numerically stable log(sum exp(x)); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> x);
/// log(mean exp(x)).
double log_mean_exp(std::span<const double> x);

/// Raw material of one outer sample: log p(Y|theta) and the inner log weights.
struct NestedDraw {
    double log_lik_outer = 0.0;
    std::vector<double> log_weights;
    double cost = 0.0;
    bool is_fallback = false;
};

/// Draws theta from the prior, Y | theta, and M inner log weights. Inner
/// thetas come from the prior (weight log p(Y|theta')) or, with use_is, from the
/// Laplace fit at (theta, Y) (weight log p(Y|theta') + log p(theta') - log q).
NestedDraw draw_nested(const BayesModel& model, long long inner_count, bool use_is,
                       const RandomStream& stream);

/// Antithetic correction 1/2 (log mean(a) + log mean(b)) - log mean(full),
/// with a and b the first and second halves of log_weights in order.
double antithetic_correction(std::span<const double> log_weights);

LevelSample sample_level(const BayesModel& model, const EstimatorConfig& config, int level,
                         const RandomStream& stream);
LevelSample sample_level_zero(const BayesModel& model, const EstimatorConfig& config,
                              const RandomStream& stream);
LevelSample sample_correction(const BayesModel& model, const EstimatorConfig& config, int level,
                              const RandomStream& stream);

/// Stream of the index-th sample at the given level for a run seeded by seed.
RandomStream level_stream(std::uint64_t seed, int level, long long index);

/// Draws samples [first, first + count) of one level, in index order.
std::vector<LevelSample> sample_level_batch(const BayesModel& model, const EstimatorConfig& config,
                                            int level, std::uint64_t seed, long long first,
                                            long long count, unsigned threads = 1);

struct NmcResult {
    double estimate = 0.0;
    double std_error = 0.0;
    double cost = 0.0;
};

/// Nested Monte Carlo with N outer and M inner samples.
NmcResult nmc_estimate(const BayesModel& model, long long N, long long M, bool use_is,
                       const RandomStream& stream, unsigned threads = 1);

}  // namespace mleig
