#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mleig/random.hpp"

namespace mleig {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Second derivatives of a vector-valued map: one d x d matrix per output.
using HessianTensor = std::vector<Matrix>;

/// Multivariate normal density with a cached Cholesky factor.
class GaussianDensity {
public:
    GaussianDensity(Vector mean, Matrix covariance);

    const Vector& mean() const noexcept { return mean_; }
    const Matrix& covariance() const noexcept { return cov_; }
    /// Lower-triangular L with L L^T = covariance.
    const Matrix& chol() const noexcept { return chol_; }
    /// -dim/2 log(2 pi) - 1/2 log det(covariance).
    double log_norm_const() const noexcept { return log_norm_; }
    Eigen::Index dim() const noexcept { return mean_.size(); }

    double log_pdf(const Vector& x) const;
    /// Covariance^{-1} (x - mean).
    Vector whiten_solve(const Vector& residual) const;
    Matrix precision() const;
    /// Covariance^{-1} rhs, column-wise.
    Matrix whiten_solve_matrix(const Matrix& rhs) const;
    /// mean + L z.
    Vector transform(const Vector& z) const { return mean_ + chol_ * z; }
    Vector sample(NormalEngine& rng) const { return transform(rng.normal_vector(dim())); }

private:
    Vector mean_;
    Matrix cov_;
    Matrix chol_;
    double log_norm_;
};

class Prior {
public:
    virtual ~Prior() = default;
    virtual Eigen::Index dim() const = 0;
    virtual Vector sample(NormalEngine& rng) const = 0;
    virtual double log_pdf(const Vector& theta) const = 0;
    virtual Vector grad_log_pdf(const Vector& theta) const = 0;
    virtual Matrix hess_log_pdf(const Vector& theta) const = 0;
    /// Gaussian surrogate used when an importance fit has to fall back.
    virtual GaussianDensity gaussianized() const = 0;
};

class GaussianPrior final : public Prior {
public:
    explicit GaussianPrior(GaussianDensity density) : density_(std::move(density)) {}

    Eigen::Index dim() const override { return density_.dim(); }
    Vector sample(NormalEngine& rng) const override { return density_.sample(rng); }
    double log_pdf(const Vector& theta) const override { return density_.log_pdf(theta); }
    Vector grad_log_pdf(const Vector& theta) const override;
    Matrix hess_log_pdf(const Vector& theta) const override;
    GaussianDensity gaussianized() const override { return density_; }

    const GaussianDensity& density() const noexcept { return density_; }

private:
    GaussianDensity density_;
};

/// Deterministic part g of the data model Y = g(theta) + noise.
///
/// jacobian() and hessian() return the plain derivatives dg/dtheta (w x d)
/// and d2g/dtheta2 (w matrices of d x d). Consumers that need the negated
/// convention (Jacobian of -g) negate explicitly.
class ForwardMap {
public:
    virtual ~ForwardMap() = default;
    virtual Eigen::Index in_dim() const = 0;
    virtual Eigen::Index out_dim() const = 0;
    virtual Vector eval(const Vector& theta) const = 0;
    virtual bool has_jacobian() const { return false; }
    virtual bool has_hessian() const { return false; }
    virtual Matrix jacobian(const Vector& theta) const;
    virtual HessianTensor hessian(const Vector& theta) const;
    virtual double cost_units() const { return 1.0; }
};

/// Forward map, prior and Gaussian noise, with N_e replicated data blocks.
///
/// Data vectors have length replicates * w: block r holds
/// g(theta) + noise_r with i.i.d. noise blocks.
class BayesModel {
public:
    BayesModel(std::shared_ptr<const Prior> prior, std::shared_ptr<const ForwardMap> forward,
               GaussianDensity noise, int replicates = 1);

    const Prior& prior() const noexcept { return *prior_; }
    const ForwardMap& forward() const noexcept { return *forward_; }
    const GaussianDensity& noise() const noexcept { return noise_; }
    int replicates() const noexcept { return replicates_; }
    Eigen::Index theta_dim() const noexcept { return prior_->dim(); }
    Eigen::Index data_dim() const noexcept { return replicates_ * forward_->out_dim(); }

    std::shared_ptr<const Prior> prior_ptr() const noexcept { return prior_; }
    std::shared_ptr<const ForwardMap> forward_ptr() const noexcept { return forward_; }

private:
    std::shared_ptr<const Prior> prior_;
    std::shared_ptr<const ForwardMap> forward_;
    GaussianDensity noise_;
    int replicates_;
};

/// log p(y | theta) as a sum of per-block Gaussian log-densities.
double log_likelihood(const BayesModel& model, const Vector& theta, const Vector& y);

/// Same, for an already evaluated g(theta).
double log_likelihood_given_forward(const BayesModel& model, const Vector& g, const Vector& y);

/// g(theta) replicated N_e times plus i.i.d. noise drawn from stream.
Vector sample_data(const BayesModel& model, const Vector& theta, const RandomStream& stream);
Vector sample_data(const BayesModel& model, const Vector& theta, NormalEngine& rng);

/// Central differences with h_i = eps^(1/3) max(1, |theta_i|).
Matrix fd_jacobian(const ForwardMap& forward, const Vector& theta);
/// Central differences with h_i = eps^(1/4) max(1, |theta_i|), symmetrized.
HessianTensor fd_hessian(const ForwardMap& forward, const Vector& theta);

/// Analytic derivative when the map provides one, finite differences otherwise.
Matrix jacobian_of(const ForwardMap& forward, const Vector& theta);
HessianTensor hessian_of(const ForwardMap& forward, const Vector& theta);

}  // namespace mleig
