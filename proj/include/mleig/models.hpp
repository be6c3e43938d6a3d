#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mleig/model.hpp"

namespace mleig {

struct LinearGaussianSpec {
    Matrix A;
    Vector mu_theta;
    Matrix Sigma_theta;
    Matrix Sigma_eps;
    int N_e = 1;

    void validate() const;
    /// d = 2, w = 3 reference problem with mu = (1, 0).
    static LinearGaussianSpec reference(int replicates = 1);
};

/// Y = A theta: analytic Jacobian, zero Hessian.
class LinearForwardMap final : public ForwardMap {
public:
    explicit LinearForwardMap(Matrix A) : A_(std::move(A)) {}
    Eigen::Index in_dim() const override { return A_.cols(); }
    Eigen::Index out_dim() const override { return A_.rows(); }
    Vector eval(const Vector& theta) const override { return A_ * theta; }
    bool has_jacobian() const override { return true; }
    bool has_hessian() const override { return true; }
    Matrix jacobian(const Vector&) const override { return A_; }
    HessianTensor hessian(const Vector&) const override;

private:
    Matrix A_;
};

/// 1/2 log det(N_e S_eps^-1 A S_theta A' + I).
double linear_gaussian_analytic_eig(const LinearGaussianSpec& spec);

BayesModel make_linear_model(const LinearGaussianSpec& spec);

enum class Schedule { kBeta, kEven, kGeometric };

Schedule parse_schedule(std::string_view name);
std::string_view schedule_name(Schedule s);

/// Blood-sampling times in hours.
///   even:      0.3 + 1.6 (j - 1)
///   geometric: 0.94 * 1.25^(j - 1)
///   beta:      24 * F^-1(j / (J + 1)) for F the Beta(0.7, 1.2) CDF
std::vector<double> sampling_schedule(Schedule scheme, int J = 15);

/// Inverse of the regularized incomplete beta function by bracketed root finding.
double beta_quantile(double u, double a, double b, double tol = 1e-12);

struct PkSpec {
    double dose = 400.0;
    double noise_var = 0.01;
    Vector prior_log_means = Vector::Zero(3);
    Vector prior_log_vars = Vector::Zero(3);
    std::vector<double> times;

    void validate() const;
    static PkSpec reference(Schedule scheme);
};

/// One-compartment oral dose concentration (D/V) ka/(ka-ke) (e^-ke t - e^-ka t).
///
/// Evaluated as (D/V) ka t e^{-ke t} psi((ka-ke) t) with psi(x) = (1-e^-x)/x,
/// which is smooth through ka = ke and reduces to the confluent limit there.
struct PkDerivatives {
    Vector value;
    /// J x 3 derivatives with respect to (ka, ke, V).
    Matrix jacobian;
    /// J matrices of 3 x 3.
    HessianTensor hessian;
};

Vector pk_forward(const PkSpec& spec, double ka, double ke, double V);
PkDerivatives pk_forward_derivatives(const PkSpec& spec, double ka, double ke, double V);

/// pk_forward of exp(theta) for theta = (log ka, log ke, log V).
class PkForwardMap final : public ForwardMap {
public:
    explicit PkForwardMap(PkSpec spec, double sign = 1.0);
    Eigen::Index in_dim() const override { return 3; }
    Eigen::Index out_dim() const override { return static_cast<Eigen::Index>(spec_.times.size()); }
    Vector eval(const Vector& theta) const override;
    bool has_jacobian() const override { return true; }
    bool has_hessian() const override { return true; }
    Matrix jacobian(const Vector& theta) const override;
    HessianTensor hessian(const Vector& theta) const override;

private:
    PkDerivatives log_space(const Vector& theta, bool second) const;
    PkSpec spec_;
    double sign_;
};

/// Gaussian prior on log parameters, noise_var I noise, N_e = 1. sign = -1
/// negates the forward map.
BayesModel make_pk_model(const PkSpec& spec, double sign = 1.0);

}  // namespace mleig
