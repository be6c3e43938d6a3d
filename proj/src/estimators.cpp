#include "mleig/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "mleig/errors.hpp"
#include "mleig/parallel.hpp"

namespace mleig {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// log of the smallest positive normal double.
const double kLogMinNormal = std::log(std::numeric_limits<double>::min());

}  // namespace

void LevelStats::add(double value, double cost) {
    const double v2 = value * value;
    ++count;
    sum1 += value;
    sum2 += v2;
    sum3 += v2 * value;
    sum4 += v2 * v2;
    total_cost += cost;
}

LevelStats& LevelStats::merge(const LevelStats& other) {
    count += other.count;
    sum1 += other.sum1;
    sum2 += other.sum2;
    sum3 += other.sum3;
    sum4 += other.sum4;
    total_cost += other.total_cost;
    return *this;
}

double LevelStats::mean() const { return count > 0 ? sum1 / static_cast<double>(count) : 0.0; }

double LevelStats::variance() const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    return std::max(0.0, (sum2 - sum1 * sum1 / n) / (n - 1.0));
}

double LevelStats::kurtosis() const {
    if (count < 4) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(count);
    const double m = sum1 / n;
    const double m2 = sum2 / n - m * m;
    if (!(m2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double m4 = sum4 / n - 4.0 * m * sum3 / n + 6.0 * m * m * sum2 / n - 3.0 * m * m * m * m;
    return std::max(0.0, m4) / (m2 * m2);
}

LevelStats accumulate(LevelStats stats, const LevelSample& s) {
    stats.add(s.value, s.cost);
    return stats;
}

LevelStats merge(LevelStats a, const LevelStats& b) { return a.merge(b); }

namespace {

// Returns (max, sum exp(x - max)) so callers can normalize before taking the log.
std::pair<double, double> shifted_sum(std::span<const double> x) {
    if (x.empty()) return {kNegInf, 0.0};
    const double hi = *std::max_element(x.begin(), x.end());
    if (hi == kNegInf || hi == std::numeric_limits<double>::infinity()) return {hi, 1.0};
    // Neumaier compensated sum
    double acc = 0.0, comp = 0.0;
    for (const double v : x) {
        const double term = std::exp(v - hi);
        const double t = acc + term;
        comp += std::abs(acc) >= term ? (acc - t) + term : (term - t) + acc;
        acc = t;
    }
    return {hi, acc + comp};
}

}  // namespace

double log_sum_exp(std::span<const double> x) {
    const auto [hi, acc] = shifted_sum(x);
    return acc > 0.0 ? hi + std::log(acc) : kNegInf;
}

double log_mean_exp(std::span<const double> x) {
    // dividing before the log keeps equal weights exact
    const auto [hi, acc] = shifted_sum(x);
    return acc > 0.0 ? hi + std::log(acc / static_cast<double>(x.size())) : kNegInf;
}

NestedDraw draw_nested(const BayesModel& model, long long inner_count, bool use_is,
                       const RandomStream& stream) {
    if (inner_count < 1) throw InvalidArgument("draw_nested: inner sample count must be >= 1");
    NestedDraw out;
    auto outer_rng = stream.child(substream::kOuterTheta).engine();
    const Vector theta = model.prior().sample(outer_rng);
    const Vector y = sample_data(model, theta, stream.child(substream::kNoise));
    out.log_lik_outer = log_likelihood(model, theta, y);

    const double units = model.forward().cost_units();
    out.cost = static_cast<double>(inner_count + 1) * units;

    std::optional<GaussianIS> proposal;
    if (use_is) {
        const auto& fwd = model.forward();
        if (!(fwd.has_jacobian() && fwd.has_hessian())) {
            const double d = static_cast<double>(model.theta_dim());
            out.cost += (2.0 * d + 2.0 * d * d) * units;
        }
        try {
            proposal = laplace_fit(model, theta, y);
            out.is_fallback = proposal->fell_back;
        } catch (const NumericalError&) {
            out.is_fallback = true;
        }
    }

    auto inner_rng = stream.child(substream::kInner).engine();
    out.log_weights.resize(static_cast<std::size_t>(inner_count));
    for (auto& lw : out.log_weights) {
        if (proposal) {
            const Vector th = proposal->fit.sample(inner_rng);
            lw = log_is_weight(model, *proposal, th, y);
        } else {
            const Vector th = model.prior().sample(inner_rng);
            lw = log_likelihood(model, th, y);
        }
    }
    return out;
}

double antithetic_correction(std::span<const double> log_weights) {
    const std::size_t half = log_weights.size() / 2;
    const double a = log_mean_exp(log_weights.first(half));
    const double b = log_mean_exp(log_weights.subspan(half));
    const double full = log_mean_exp(log_weights);
    return 0.5 * (a + b) - full;
}

LevelSample sample_level(const BayesModel& model, const EstimatorConfig& config, int level,
                         const RandomStream& stream) {
    if (level < 0) throw InvalidArgument("sample_level: level must be >= 0");
    if (config.M0 < 1) throw InvalidArgument("sample_level: M0 must be >= 1");
    const NestedDraw draw = draw_nested(model, config.inner_samples(level), config.use_is, stream);
    const std::span<const double> lw(draw.log_weights);

    const double full = log_mean_exp(lw);
    if (full == kNegInf) throw UnderflowError("inner average underflowed to zero", -1);

    LevelSample s;
    s.level = level;
    s.cost = draw.cost;
    s.is_fallback = draw.is_fallback;
    s.linear_underflow = *std::max_element(lw.begin(), lw.end()) < kLogMinNormal;
    s.fine = draw.log_lik_outer - full;
    if (level == 0) {
        s.value = s.fine;
    } else if (config.coupling == Coupling::kAntithetic) {
        s.value = antithetic_correction(lw);
    } else {
        s.value = log_mean_exp(lw.first(lw.size() / 2)) - full;
    }
    return s;
}

LevelSample sample_level_zero(const BayesModel& model, const EstimatorConfig& config,
                              const RandomStream& stream) {
    return sample_level(model, config, 0, stream);
}

LevelSample sample_correction(const BayesModel& model, const EstimatorConfig& config, int level,
                              const RandomStream& stream) {
    if (level < 1) throw InvalidArgument("sample_correction: level must be >= 1");
    return sample_level(model, config, level, stream);
}

RandomStream level_stream(std::uint64_t seed, int level, long long index) {
    return RandomStream(seed, {static_cast<std::uint64_t>(StreamPurpose::kLevelSample),
                               static_cast<std::uint64_t>(level), static_cast<std::uint64_t>(index)});
}

std::vector<LevelSample> sample_level_batch(const BayesModel& model, const EstimatorConfig& config,
                                            int level, std::uint64_t seed, long long first,
                                            long long count, unsigned threads) {
    return parallel_map<LevelSample>(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
        const long long index = first + static_cast<long long>(i);
        try {
            return sample_level(model, config, level, level_stream(seed, level, index));
        } catch (const UnderflowError& e) {
            throw UnderflowError("level " + std::to_string(level) +
                                     ": inner average underflowed at outer index " + std::to_string(index),
                                 index);
        }
    });
}

NmcResult nmc_estimate(const BayesModel& model, long long N, long long M, bool use_is,
                       const RandomStream& stream, unsigned threads) {
    if (N < 1 || M < 1) throw InvalidArgument("nmc_estimate: N and M must be >= 1");
    struct Term {
        double value;
        double cost;
    };
    const auto terms = parallel_map<Term>(static_cast<std::size_t>(N), threads, [&](std::size_t n) {
        const NestedDraw draw = draw_nested(model, M, use_is, stream.child(n));
        const double inner = log_mean_exp(draw.log_weights);
        if (inner == kNegInf)
            throw UnderflowError("nmc_estimate: inner average underflowed at outer index " + std::to_string(n),
                                 static_cast<long long>(n));
        return Term{draw.log_lik_outer - inner, draw.cost};
    });
    LevelStats stats;
    for (const auto& t : terms) stats.add(t.value, t.cost);
    return {stats.mean(), std::sqrt(stats.variance() / static_cast<double>(N)), stats.total_cost};
}

}  // namespace mleig
