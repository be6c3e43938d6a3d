#include "mleig/models.hpp"

#include <cmath>
#include <cstdint>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/tools/roots.hpp>

#include "mleig/errors.hpp"

namespace mleig {

void LinearGaussianSpec::validate() const {
    const auto d = A.cols();
    const auto w = A.rows();
    if (d == 0 || w == 0) throw InvalidArgument("linear model: A must be non-empty");
    if (mu_theta.size() != d || Sigma_theta.rows() != d || Sigma_theta.cols() != d)
        throw InvalidArgument("linear model: mu_theta / Sigma_theta must match the columns of A");
    if (Sigma_eps.rows() != w || Sigma_eps.cols() != w)
        throw InvalidArgument("linear model: Sigma_eps must match the rows of A");
    if (N_e < 1) throw InvalidArgument("linear model: N_e must be >= 1");
}

LinearGaussianSpec LinearGaussianSpec::reference(int replicates) {
    LinearGaussianSpec s;
    s.A.resize(3, 2);
    s.A << 1, 2, 2, 3, 3, 4;
    s.mu_theta.resize(2);
    s.mu_theta << 1, 0;
    s.Sigma_theta.resize(2, 2);
    s.Sigma_theta << 2, -1, -1, 2;
    s.Sigma_eps.resize(3, 3);
    s.Sigma_eps << 0.1, -0.05, 0, -0.05, 0.1, -0.05, 0, -0.05, 0.1;
    s.N_e = replicates;
    return s;
}

HessianTensor LinearForwardMap::hessian(const Vector&) const {
    return HessianTensor(static_cast<std::size_t>(A_.rows()), Matrix::Zero(A_.cols(), A_.cols()));
}

double linear_gaussian_analytic_eig(const LinearGaussianSpec& spec) {
    spec.validate();
    Eigen::LLT<Matrix> noise(spec.Sigma_eps);
    if (noise.info() != Eigen::Success) throw InvalidArgument("linear model: Sigma_eps is not positive definite");
    // L^-1 A S A' L^-T + I/N_e is SPD and similar to (S_eps^-1 A S A' + I/N_e).
    const Matrix B = noise.matrixL().solve(spec.A);
    Matrix sym = spec.N_e * B * spec.Sigma_theta * B.transpose();
    sym = 0.5 * (sym + sym.transpose());
    sym.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() != Eigen::Success) throw InvalidArgument("linear model: Sigma_theta is not positive semi-definite");
    const Matrix L = llt.matrixL();
    return L.diagonal().array().log().sum();
}

BayesModel make_linear_model(const LinearGaussianSpec& spec) {
    spec.validate();
    auto prior = std::make_shared<GaussianPrior>(GaussianDensity(spec.mu_theta, spec.Sigma_theta));
    auto forward = std::make_shared<LinearForwardMap>(spec.A);
    return BayesModel(prior, forward, GaussianDensity(Vector::Zero(spec.A.rows()), spec.Sigma_eps), spec.N_e);
}

Schedule parse_schedule(std::string_view name) {
    if (name == "beta") return Schedule::kBeta;
    if (name == "even") return Schedule::kEven;
    if (name == "geometric") return Schedule::kGeometric;
    throw InvalidArgument("unknown sampling scheme '" + std::string(name) + "'");
}

std::string_view schedule_name(Schedule s) {
    switch (s) {
        case Schedule::kBeta: return "beta";
        case Schedule::kEven: return "even";
        case Schedule::kGeometric: return "geometric";
    }
    return "?";
}

double beta_quantile(double u, double a, double b, double tol) {
    if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("beta_quantile: u must lie in (0, 1)");
    auto f = [&](double x) { return boost::math::ibeta(a, b, x) - u; };
    auto stop = [tol](double lo, double hi) { return hi - lo <= tol; };
    std::uintmax_t iterations = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, 1.0, -u, 1.0 - u, stop, iterations);
    return 0.5 * (lo + hi);
}

std::vector<double> sampling_schedule(Schedule scheme, int J) {
    if (J < 1) throw InvalidArgument("sampling_schedule: J must be >= 1");
    std::vector<double> t(static_cast<std::size_t>(J));
    for (int j = 1; j <= J; ++j) {
        double& tj = t[static_cast<std::size_t>(j - 1)];
        switch (scheme) {
            case Schedule::kEven: tj = 0.3 + 1.6 * (j - 1); break;
            case Schedule::kGeometric: tj = 0.94 * std::pow(1.25, j - 1); break;
            case Schedule::kBeta: tj = 24.0 * beta_quantile(static_cast<double>(j) / (J + 1), 0.7, 1.2); break;
        }
    }
    return t;
}

void PkSpec::validate() const {
    if (!(dose > 0.0)) throw InvalidArgument("pk: dose must be positive");
    if (!(noise_var > 0.0)) throw InvalidArgument("pk: noise_var must be positive");
    if (prior_log_means.size() != 3 || prior_log_vars.size() != 3)
        throw InvalidArgument("pk: prior log-means and log-variances must have 3 entries");
    if (!(prior_log_vars.array() > 0.0).all()) throw InvalidArgument("pk: prior variances must be positive");
    if (times.empty()) throw InvalidArgument("pk: schedule must be non-empty");
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (!(times[j] >= 0.0)) throw InvalidArgument("pk: times must be >= 0");
        if (j > 0 && !(times[j] > times[j - 1])) throw InvalidArgument("pk: times must be strictly increasing");
    }
}

PkSpec PkSpec::reference(Schedule scheme) {
    PkSpec s;
    s.prior_log_means << 0.0, std::log(0.1), std::log(20.0);
    s.prior_log_vars << 0.05, 0.05, 0.05;
    s.times = sampling_schedule(scheme, 15);
    return s;
}

namespace {

struct Psi {
    double f, d1, d2;
};

// psi(x) = (1 - e^-x) / x and its first two derivatives.
Psi psi(double x) {
    if (std::abs(x) < 0.5) {
        // psi(x) = sum_n c_n x^n with c_n = (-1)^n / (n+1)!
        double f = 0.0, d1 = 0.0, d2 = 0.0;
        double c = 1.0;
        double xn = 1.0;  // x^(n-2)
        for (int n = 0; n < 22; ++n) {
            if (n > 0) c *= -1.0 / (n + 1);
            if (n == 0) f += c;
            if (n == 1) { f += c * x; d1 += c; }
            if (n >= 2) {
                f += c * xn * x * x;
                d1 += n * c * xn * x;
                d2 += n * (n - 1) * c * xn;
                xn *= x;
            }
        }
        return {f, d1, d2};
    }
    const double e = std::exp(-x);
    return {-std::expm1(-x) / x, (e * (x + 1.0) - 1.0) / (x * x), (2.0 - e * (x * x + 2.0 * x + 2.0)) / (x * x * x)};
}

void check_params(double ka, double ke, double V) {
    if (!(ka > 0.0 && ke > 0.0 && V > 0.0)) throw InvalidArgument("pk_forward: ka, ke and V must be positive");
}

}  // namespace

Vector pk_forward(const PkSpec& spec, double ka, double ke, double V) {
    check_params(ka, ke, V);
    const double c = spec.dose / V;
    const double delta = ka - ke;
    Vector out(static_cast<Eigen::Index>(spec.times.size()));
    for (std::size_t j = 0; j < spec.times.size(); ++j) {
        const double t = spec.times[j];
        out[static_cast<Eigen::Index>(j)] = c * ka * t * std::exp(-ke * t) * psi(delta * t).f;
    }
    return out;
}

PkDerivatives pk_forward_derivatives(const PkSpec& spec, double ka, double ke, double V) {
    check_params(ka, ke, V);
    const auto J = static_cast<Eigen::Index>(spec.times.size());
    const double c = spec.dose / V;
    const double delta = ka - ke;
    PkDerivatives out{Vector(J), Matrix(J, 3), HessianTensor(static_cast<std::size_t>(J), Matrix::Zero(3, 3))};
    for (Eigen::Index j = 0; j < J; ++j) {
        const double t = spec.times[static_cast<std::size_t>(j)];
        const double ee = std::exp(-ke * t);
        const Psi p = psi(delta * t);
        // h = u s with u = ka t e^{-ke t}, s = psi((ka - ke) t)
        const double u = ka * t * ee, u_a = t * ee, u_e = -t * u, u_ee = t * t * u, u_ae = -t * u_a;
        const double s = p.f, s_a = t * p.d1, s_e = -t * p.d1;
        const double s_aa = t * t * p.d2, s_ee = s_aa, s_ae = -s_aa;
        const double h = u * s;
        const double h_a = u_a * s + u * s_a;
        const double h_e = u_e * s + u * s_e;
        const double h_aa = 2.0 * u_a * s_a + u * s_aa;
        const double h_ee = u_ee * s + 2.0 * u_e * s_e + u * s_ee;
        const double h_ae = u_ae * s + u_a * s_e + u_e * s_a + u * s_ae;

        out.value[j] = c * h;
        out.jacobian(j, 0) = c * h_a;
        out.jacobian(j, 1) = c * h_e;
        out.jacobian(j, 2) = -c / V * h;
        Matrix& H = out.hessian[static_cast<std::size_t>(j)];
        H(0, 0) = c * h_aa;
        H(1, 1) = c * h_ee;
        H(0, 1) = H(1, 0) = c * h_ae;
        H(0, 2) = H(2, 0) = -c / V * h_a;
        H(1, 2) = H(2, 1) = -c / V * h_e;
        H(2, 2) = 2.0 * c / (V * V) * h;
    }
    return out;
}

PkForwardMap::PkForwardMap(PkSpec spec, double sign) : spec_(std::move(spec)), sign_(sign) {
    spec_.validate();
}

Vector PkForwardMap::eval(const Vector& theta) const {
    return sign_ * pk_forward(spec_, std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2]));
}

PkDerivatives PkForwardMap::log_space(const Vector& theta, bool second) const {
    const Vector p = theta.array().exp();
    PkDerivatives d = pk_forward_derivatives(spec_, p[0], p[1], p[2]);
    const Matrix jac_p = d.jacobian;
    d.jacobian = jac_p * p.asDiagonal();
    if (second) {
        for (std::size_t k = 0; k < d.hessian.size(); ++k) {
            Matrix& H = d.hessian[k];
            H = p.asDiagonal() * H * p.asDiagonal();
            H.diagonal() += d.jacobian.row(static_cast<Eigen::Index>(k)).transpose();
        }
    }
    d.value *= sign_;
    d.jacobian *= sign_;
    for (auto& H : d.hessian) H *= sign_;
    return d;
}

Matrix PkForwardMap::jacobian(const Vector& theta) const { return log_space(theta, false).jacobian; }

HessianTensor PkForwardMap::hessian(const Vector& theta) const { return log_space(theta, true).hessian; }

BayesModel make_pk_model(const PkSpec& spec, double sign) {
    spec.validate();
    auto prior = std::make_shared<GaussianPrior>(
        GaussianDensity(spec.prior_log_means, Matrix(spec.prior_log_vars.asDiagonal())));
    auto forward = std::make_shared<PkForwardMap>(spec, sign);
    const auto J = static_cast<Eigen::Index>(spec.times.size());
    return BayesModel(prior, forward, GaussianDensity(Vector::Zero(J), spec.noise_var * Matrix::Identity(J, J)), 1);
}

}  // namespace mleig
