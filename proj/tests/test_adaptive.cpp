#include "doctest.h"

#include <cmath>

#include "mleig/adaptive.hpp"
#include "mleig/errors.hpp"
#include "mleig/models.hpp"

using namespace mleig;

namespace {

struct ConstantMap final : ForwardMap {
    Eigen::Index in_dim() const override { return 2; }
    Eigen::Index out_dim() const override { return 2; }
    Vector eval(const Vector&) const override { return Vector::Constant(2, -0.3); }
    bool has_jacobian() const override { return true; }
    bool has_hessian() const override { return true; }
    Matrix jacobian(const Vector&) const override { return Matrix::Zero(2, 2); }
    HessianTensor hessian(const Vector&) const override { return HessianTensor(2, Matrix::Zero(2, 2)); }
};

void check_termination(const MlmcRunResult& r, const AdaptiveConfig& cfg) {
    CHECK(r.estimator_variance() <= (1.0 - cfg.omega) * cfg.eps * cfg.eps);
    REQUIRE_FALSE(r.iterations.empty());
    const RoundTrace& last = r.iterations.back();
    CHECK(last.bias_tested);
    CHECK(last.bias_ok);
    CHECK(last.L == r.L());
    CHECK(bias_converged(r.levels.back().mean, last.alpha_hat, cfg.eps, cfg.omega));
    for (int l = 0; l <= r.L(); ++l) CHECK(last.allocated[l] <= r.levels[l].N);
    double sum = 0.0;
    for (const auto& lv : r.levels) sum += lv.mean;
    CHECK(r.estimate == doctest::Approx(sum).epsilon(1e-14));
}

}  // namespace

TEST_CASE("optimal allocation examples") {
    CHECK(optimal_allocation({1.0, 0.25}, {2.0, 3.0}, 0.1, 0.25) == std::vector<long long>{215, 88});
    for (double v : {0.3, 1.0, 7.5})
        for (double c : {1.0, 4.0, 100.0})
            CHECK(optimal_allocation({v}, {c}, 0.05, 0.25)[0] ==
                  static_cast<long long>(std::ceil(v / (0.75 * 0.05 * 0.05) - 1e-9)));
    CHECK(optimal_allocation({0.0, 0.0, 0.0}, {1.0, 2.0, 4.0}, 1e-3, 0.25) == std::vector<long long>{1, 1, 1});
    CHECK_THROWS_AS(optimal_allocation({1.0}, {1.0}, 0.0, 0.25), InvalidArgument);
    CHECK_THROWS_AS(optimal_allocation({1.0}, {1.0}, -1.0, 0.25), InvalidArgument);
}

TEST_CASE("allocation never decreases as eps decreases") {
    auto e = RandomStream(11).engine();
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(5), c(5);
        for (int l = 0; l < 5; ++l) {
            v[l] = std::exp(3.0 * e.normal());
            c[l] = std::exp2(l) * (1.0 + e.uniform());
        }
        const double eps = 1e-3 + e.uniform();
        const auto coarse = optimal_allocation(v, c, eps, 0.25);
        const auto fine = optimal_allocation(v, c, eps * (0.2 + 0.8 * e.uniform()), 0.25);
        for (int l = 0; l < 5; ++l) CHECK(fine[l] >= coarse[l]);
    }
}

TEST_CASE("rate estimation examples") {
    CHECK(estimate_rates({0.5, 0.25, 0.125}, {1.0, 1.0, 1.0}).alpha_hat == doctest::Approx(1.0).epsilon(1e-14));
    const double c = 3.7;
    CHECK(estimate_rates({1.0, 2.0, 3.0}, {c / 4, c / 16, c / 64}).beta_hat == doctest::Approx(2.0).epsilon(1e-14));
    // growing means clamp to the floor
    CHECK(estimate_rates({0.1, 0.2, 0.4}, {1.0, 0.5, 0.25}).alpha_hat == 0.5);
    CHECK_THROWS_AS(estimate_rates({0.5}, {1.0}), InsufficientData);
    CHECK_THROWS_AS(estimate_rates({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}), InsufficientData);
    CHECK_THROWS_AS(estimate_rates({1.0, 1.0}, {0.0, 0.0}), InsufficientData);
}

TEST_CASE("bias test examples") {
    for (double eps : {1e-6, 1e-2, 1.0}) CHECK(bias_converged(0.0, 0.5, eps, 0.25));
    CHECK_FALSE(bias_converged(0.01, 1.0, 0.019, 0.25));
    CHECK(bias_converged(0.009, 1.0, 0.02, 0.25));
    CHECK(bias_converged(-0.009, 1.0, 0.02, 0.25));
}

TEST_CASE("NMC cost model examples") {
    CHECK(nmc_cost_model(1.0, 1.0, 1.0, 0.25) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    const double base = nmc_cost_model(0.7, 33.0, 0.01, 0.25);
    CHECK(nmc_cost_model(0.7, 33.0, 0.005, 0.25) == doctest::Approx(4.0 * base).epsilon(1e-14));
    CHECK(nmc_cost_model(0.7, 66.0, 0.01, 0.25) == doctest::Approx(2.0 * base).epsilon(1e-14));
}

TEST_CASE("configuration validation") {
    AdaptiveConfig c;
    CHECK_NOTHROW(c.validate());
    c.omega = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.eps = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.L0 = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("constant forward map terminates at L0 with estimate zero") {
    auto prior = std::make_shared<GaussianPrior>(GaussianDensity(Vector::Zero(2), Matrix::Identity(2, 2)));
    const BayesModel model(prior, std::make_shared<ConstantMap>(),
                           GaussianDensity(Vector::Zero(2), Matrix::Identity(2, 2)));
    EstimatorConfig est;
    est.use_is = false;
    AdaptiveConfig cfg;
    cfg.eps = 1e-3;
    cfg.seed = 5;
    const auto r = run_adaptive(model, est, cfg);
    CHECK(r.estimate == 0.0);
    CHECK(r.L() == cfg.L0);
    check_termination(r, cfg);
}

TEST_CASE("linear model run satisfies the termination invariants") {
    const auto model = make_linear_model(LinearGaussianSpec::reference(1));
    EstimatorConfig est;
    AdaptiveConfig cfg;
    cfg.eps = 1e-2;
    cfg.seed = 2;
    const auto r = run_adaptive(model, est, cfg);
    check_termination(r, cfg);
    CHECK(std::abs(r.estimate - 4.4574) <= 3 * cfg.eps);
    for (int l = 1; l <= r.L(); ++l) CHECK(r.levels[l].N <= r.levels[l - 1].N);
    for (const auto& lv : r.levels) CHECK(lv.cost == doctest::Approx(std::exp2(lv.level) + 1.0));
    CHECK(std::isfinite(r.alpha_hat));
    CHECK(std::isfinite(r.beta_hat));

    cfg.threads = 4;
    const auto again = run_adaptive(model, est, cfg);
    CHECK(again.estimate == r.estimate);
    CHECK(again.total_cost == r.total_cost);
}

TEST_CASE("exceeding L_max raises non-convergence with the trace") {
    const auto model = make_linear_model(LinearGaussianSpec::reference(1));
    EstimatorConfig est;
    AdaptiveConfig cfg;
    cfg.eps = 1e-4;
    cfg.L_max = 2;
    try {
        run_adaptive(model, est, cfg);
        FAIL("expected NonConvergence");
    } catch (const NonConvergence& e) {
        CHECK(e.trace.L() == 2);
        REQUIRE_FALSE(e.trace.iterations.empty());
        CHECK_FALSE(e.trace.iterations.back().bias_ok);
        CHECK(e.trace.levels[0].N == cfg.N_star);
    }
}
