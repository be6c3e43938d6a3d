#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>

#include "mleig/errors.hpp"
#include "mleig/laplace.hpp"
#include "mleig/models.hpp"
#include "oracles.hpp"

using namespace mleig;

namespace {

// g(theta) = theta^2, scalar, with analytic derivatives.
struct SquareMap final : ForwardMap {
    Eigen::Index in_dim() const override { return 1; }
    Eigen::Index out_dim() const override { return 1; }
    Vector eval(const Vector& t) const override { return Vector::Constant(1, t[0] * t[0]); }
    bool has_jacobian() const override { return true; }
    bool has_hessian() const override { return true; }
    Matrix jacobian(const Vector& t) const override { return Matrix::Constant(1, 1, 2 * t[0]); }
    HessianTensor hessian(const Vector&) const override { return {Matrix::Constant(1, 1, 2.0)}; }
};

struct InfJacobianMap final : ForwardMap {
    Eigen::Index in_dim() const override { return 1; }
    Eigen::Index out_dim() const override { return 1; }
    Vector eval(const Vector& t) const override { return t; }
    bool has_jacobian() const override { return true; }
    Matrix jacobian(const Vector&) const override {
        return Matrix::Constant(1, 1, std::numeric_limits<double>::infinity());
    }
};

BayesModel scalar_model(std::shared_ptr<const ForwardMap> f, double noise_var) {
    auto prior = std::make_shared<GaussianPrior>(GaussianDensity(Vector::Zero(1), Matrix::Identity(1, 1)));
    return BayesModel(prior, std::move(f), GaussianDensity(Vector::Zero(1), Matrix::Constant(1, 1, noise_var)));
}

Vector stack(const Vector& y, int ne) {
    Vector out(y.size() * ne);
    for (int r = 0; r < ne; ++r) out.segment(r * y.size(), y.size()) = y;
    return out;
}

}  // namespace

TEST_CASE("Laplace fit from the prior mean is the exact linear-Gaussian posterior") {
    for (int ne : {1, 10}) {
        const auto spec = LinearGaussianSpec::reference(ne);
        const auto model = make_linear_model(spec);
        const Vector y = sample_data(model, spec.mu_theta + Vector::Constant(2, 0.7), RandomStream(12, {3}));

        const Matrix Se_inv = spec.Sigma_eps.inverse();
        const Matrix St_inv = spec.Sigma_theta.inverse();
        Vector ysum = Vector::Zero(3);
        for (int r = 0; r < ne; ++r) ysum += y.segment(3 * r, 3);
        const Matrix post_cov = (ne * spec.A.transpose() * Se_inv * spec.A + St_inv).inverse();
        const Vector post_mean = post_cov * (spec.A.transpose() * Se_inv * ysum + St_inv * spec.mu_theta);

        const GaussianIS is = laplace_fit(model, spec.mu_theta, y);
        CHECK_FALSE(is.fell_back);
        CHECK((is.fit.mean() - post_mean).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((is.fit.covariance() - post_cov).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("Laplace fit of an uninformative likelihood returns the prior") {
    auto spec = LinearGaussianSpec::reference();
    spec.A.setZero();
    const auto model = make_linear_model(spec);
    const Vector y = sample_data(model, spec.mu_theta, RandomStream(1));
    const GaussianIS is = laplace_fit(model, spec.mu_theta, y);
    CHECK((is.fit.mean() - spec.mu_theta).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((is.fit.covariance() - spec.Sigma_theta).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Laplace fit on the PK model lands in the posterior bulk") {
    for (auto scheme : {Schedule::kBeta, Schedule::kEven, Schedule::kGeometric}) {
        const auto spec = PkSpec::reference(scheme);
        const auto model = make_pk_model(spec);
        const Vector theta_star = spec.prior_log_means;
        const Vector y = sample_data(model, theta_star, RandomStream(77, {static_cast<std::uint64_t>(scheme)}));
        auto log_post = [&](const Vector& t) { return log_likelihood(model, t, y) + model.prior().log_pdf(t); };

        const GaussianIS is = laplace_fit(model, theta_star, y);
        CHECK_FALSE(is.fell_back);
        CHECK(Eigen::LLT<Matrix>(is.fit.covariance()).info() == Eigen::Success);
        CHECK(log_post(is.fit.mean()) >= log_post(theta_star) - 10.0);

        // Dense lattice over +-4 prior standard deviations.
        const int n = 61;
        const double half = 4.0 * std::sqrt(0.05);
        double best = -std::numeric_limits<double>::infinity();
        Vector argbest = theta_star;
        Vector t(3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    t << theta_star[0] - half + 2 * half * i / (n - 1), theta_star[1] - half + 2 * half * j / (n - 1),
                        theta_star[2] - half + 2 * half * k / (n - 1);
                    const double v = log_post(t);
                    if (v > best) {
                        best = v;
                        argbest = t;
                    }
                }
        CHECK(log_post(is.fit.mean()) >= best - 10.0);
        // the lattice mode lies within a few fitted standard deviations of theta_hat
        const Vector z = is.fit.chol().triangularView<Eigen::Lower>().solve(argbest - is.fit.mean());
        CHECK(z.norm() <= 4.0);
    }
}

TEST_CASE("importance weight with the prior as proposal is the likelihood") {
    const auto spec = LinearGaussianSpec::reference();
    const auto model = make_linear_model(spec);
    const GaussianIS is{GaussianDensity(spec.mu_theta, spec.Sigma_theta)};
    const Vector y = sample_data(model, spec.mu_theta, RandomStream(2));
    auto e = RandomStream(3).engine();
    for (int i = 0; i < 10; ++i) {
        const Vector th = model.prior().sample(e);
        CHECK(log_is_weight(model, is, th, y) == doctest::Approx(log_likelihood(model, th, y)).epsilon(1e-12));
    }
}

TEST_CASE("importance weight at theta_hat is the sum of three Gaussian log-densities") {
    const auto spec = LinearGaussianSpec::reference();
    const auto model = make_linear_model(spec);
    Vector theta_star(2);
    theta_star << 0.4, 1.1;
    const Vector y = sample_data(model, theta_star, RandomStream(5));
    const GaussianIS is = laplace_fit(model, theta_star, y);
    const Vector th = is.fit.mean();

    auto log_pdf_2d = [](const Vector& x, const Vector& m, const Matrix& S) {
        const double det = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
        const double a = x[0] - m[0], b = x[1] - m[1];
        const double quad = (S(1, 1) * a * a - 2 * S(0, 1) * a * b + S(0, 0) * b * b) / det;
        return -std::log(2 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
    };
    const Vector g = spec.A * th;
    const double r[3] = {y[0] - g[0], y[1] - g[1], y[2] - g[2]};
    const double S[3][3] = {{0.1, -0.05, 0}, {-0.05, 0.1, -0.05}, {0, -0.05, 0.1}};
    const double expected = oracle::gaussian_log_pdf_3d(r, S) + log_pdf_2d(th, spec.mu_theta, spec.Sigma_theta) -
                            log_pdf_2d(th, is.fit.mean(), is.fit.covariance());
    CHECK(log_is_weight(model, is, th, y) == doctest::Approx(expected).epsilon(1e-11));
}

TEST_CASE("importance-weighted evidence matches the closed-form marginal likelihood") {
    LinearGaussianSpec spec;
    spec.A = Matrix::Identity(1, 1);
    spec.mu_theta = Vector::Zero(1);
    spec.Sigma_theta = Matrix::Identity(1, 1);
    spec.Sigma_eps = Matrix::Identity(1, 1);
    const auto model = make_linear_model(spec);
    const Vector theta_star = Vector::Constant(1, 0.8);
    const Vector y = sample_data(model, theta_star, RandomStream(21));
    const GaussianIS is = laplace_fit(model, theta_star, y);

    auto e = RandomStream(22).engine();
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double w = std::exp(log_is_weight(model, is, is.fit.sample(e), y));
        s += w;
        s2 += w * w;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    const double evidence = std::exp(oracle::normal_log_pdf(y[0], 0.0, 2.0));
    CHECK(std::abs(mean - evidence) <= 3.0 * se);
}

TEST_CASE("SPD safeguard shifts eigenvalues by exactly the added jitter") {
    Matrix m(3, 3);
    m << 2, 0, 0, 0, 1, 0, 0, 0, -1e-10;
    const Matrix q = Eigen::HouseholderQR<Matrix>(Matrix::Random(3, 3)).householderQ();
    const Matrix rotated = q * m * q.transpose();
    const auto res = make_spd(rotated);
    REQUIRE(res.ok);
    CHECK(res.jitter > 0.0);
    CHECK(res.jitter <= 1e-4 * rotated.trace() / 3.0);
    const Vector before = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (rotated + rotated.transpose())).eigenvalues();
    const Vector after = Eigen::SelfAdjointEigenSolver<Matrix>(res.matrix).eigenvalues();
    CHECK((after - before).cwiseAbs().maxCoeff() <= res.jitter * (1 + 1e-6) + 1e-15);
    CHECK((after - before).cwiseAbs().minCoeff() >= res.jitter * (1 - 1e-6) - 1e-15);

    Matrix pd = Matrix::Identity(2, 2);
    CHECK(make_spd(pd).jitter == 0.0);

    Matrix bad(2, 2);
    bad << 1, 0, 0, -5;
    CHECK_FALSE(make_spd(bad).ok);
}

TEST_CASE("indefinite Newton matrix falls back to the prior surrogate") {
    const auto model = scalar_model(std::make_shared<SquareMap>(), 0.01);
    const Vector theta_star = Vector::Zero(1);
    const Vector y = Vector::Constant(1, 5.0);  // E = 5, H'S^-1E = -1000
    const GaussianIS is = laplace_fit(model, theta_star, y);
    CHECK(is.fell_back);
    CHECK(is.fit.mean()[0] == 0.0);
    CHECK(is.fit.covariance()(0, 0) == 1.0);
}

TEST_CASE("non-finite derivatives raise a numerical error") {
    const auto model = scalar_model(std::make_shared<InfJacobianMap>(), 1.0);
    CHECK_THROWS_AS(laplace_fit(model, Vector::Zero(1), Vector::Zero(1)), NumericalError);
}
