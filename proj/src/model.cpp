#include "mleig/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mleig/errors.hpp"

namespace mleig {

namespace {

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

GaussianDensity::GaussianDensity(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), cov_(std::move(covariance)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size() || mean_.size() == 0)
        throw InvalidArgument("GaussianDensity: covariance must be square and match the mean");
    const double scale = cov_.cwiseAbs().maxCoeff();
    if (!((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale))
        throw InvalidArgument("GaussianDensity: covariance is not symmetric");
    Eigen::LLT<Matrix> llt(cov_);
    if (llt.info() != Eigen::Success)
        throw InvalidArgument("GaussianDensity: covariance is not positive definite");
    chol_ = llt.matrixL();
    const double log_det = 2.0 * chol_.diagonal().array().log().sum();
    log_norm_ = -0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) -
                0.5 * log_det;
}

double GaussianDensity::log_pdf(const Vector& x) const {
    if (x.size() != mean_.size()) throw InvalidArgument("GaussianDensity::log_pdf: dimension mismatch");
    const Vector z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
    return log_norm_ - 0.5 * z.squaredNorm();
}

Vector GaussianDensity::whiten_solve(const Vector& residual) const {
    Vector z = chol_.triangularView<Eigen::Lower>().solve(residual);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Matrix GaussianDensity::precision() const {
    return whiten_solve_matrix(Matrix::Identity(dim(), dim()));
}

Matrix GaussianDensity::whiten_solve_matrix(const Matrix& rhs) const {
    Matrix z = chol_.triangularView<Eigen::Lower>().solve(rhs);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Vector GaussianPrior::grad_log_pdf(const Vector& theta) const {
    return -density_.whiten_solve(theta - density_.mean());
}

Matrix GaussianPrior::hess_log_pdf(const Vector&) const { return -density_.precision(); }

Matrix ForwardMap::jacobian(const Vector& theta) const { return fd_jacobian(*this, theta); }

HessianTensor ForwardMap::hessian(const Vector& theta) const { return fd_hessian(*this, theta); }

BayesModel::BayesModel(std::shared_ptr<const Prior> prior, std::shared_ptr<const ForwardMap> forward,
                       GaussianDensity noise, int replicates)
    : prior_(std::move(prior)), forward_(std::move(forward)), noise_(std::move(noise)),
      replicates_(replicates) {
    if (!prior_ || !forward_) throw InvalidArgument("BayesModel: prior and forward map are required");
    if (replicates_ < 1) throw InvalidArgument("BayesModel: replicates must be >= 1");
    if (noise_.dim() != forward_->out_dim())
        throw InvalidArgument("BayesModel: noise dimension must equal forward output dimension");
    if (!noise_.mean().isZero(0.0)) throw InvalidArgument("BayesModel: noise must have zero mean");
    if (prior_->dim() != forward_->in_dim())
        throw InvalidArgument("BayesModel: prior dimension must equal forward input dimension");
}

double log_likelihood_given_forward(const BayesModel& model, const Vector& g, const Vector& y) {
    const Eigen::Index w = model.forward().out_dim();
    if (g.size() != w || y.size() != model.data_dim())
        throw InvalidArgument("log_likelihood: dimension mismatch");
    const auto& noise = model.noise();
    const auto L = noise.chol().triangularView<Eigen::Lower>();
    double quad = 0.0;
    for (int r = 0; r < model.replicates(); ++r) {
        const Vector z = L.solve(y.segment(r * w, w) - g);
        quad += z.squaredNorm();
    }
    return model.replicates() * noise.log_norm_const() - 0.5 * quad;
}

double log_likelihood(const BayesModel& model, const Vector& theta, const Vector& y) {
    if (theta.size() != model.theta_dim()) throw InvalidArgument("log_likelihood: dimension mismatch");
    return log_likelihood_given_forward(model, model.forward().eval(theta), y);
}

Vector sample_data(const BayesModel& model, const Vector& theta, NormalEngine& rng) {
    if (theta.size() != model.theta_dim()) throw InvalidArgument("sample_data: dimension mismatch");
    const Eigen::Index w = model.forward().out_dim();
    const Vector g = model.forward().eval(theta);
    Vector y(model.data_dim());
    for (int r = 0; r < model.replicates(); ++r)
        y.segment(r * w, w) = g + model.noise().chol() * rng.normal_vector(w);
    return y;
}

Vector sample_data(const BayesModel& model, const Vector& theta, const RandomStream& stream) {
    auto rng = stream.engine();
    return sample_data(model, theta, rng);
}

Matrix fd_jacobian(const ForwardMap& forward, const Vector& theta) {
    static const double c = std::cbrt(std::numeric_limits<double>::epsilon());
    const Eigen::Index d = theta.size();
    Matrix jac(forward.out_dim(), d);
    Vector tp = theta, tm = theta;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double h = c * std::max(1.0, std::abs(theta[i]));
        tp[i] = theta[i] + h;
        tm[i] = theta[i] - h;
        const Vector gp = forward.eval(tp);
        const Vector gm = forward.eval(tm);
        require_finite(gp, "forward evaluation in fd_jacobian");
        require_finite(gm, "forward evaluation in fd_jacobian");
        jac.col(i) = (gp - gm) / (tp[i] - tm[i]);
        tp[i] = tm[i] = theta[i];
    }
    return jac;
}

HessianTensor fd_hessian(const ForwardMap& forward, const Vector& theta) {
    static const double c = std::sqrt(std::sqrt(std::numeric_limits<double>::epsilon()));
    const Eigen::Index d = theta.size();
    const Eigen::Index w = forward.out_dim();
    Vector h(d);
    for (Eigen::Index i = 0; i < d; ++i) h[i] = c * std::max(1.0, std::abs(theta[i]));

    auto eval_at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
        Vector t = theta;
        t[i] += si * h[i];
        t[j] += sj * h[j];
        Vector g = forward.eval(t);
        require_finite(g, "forward evaluation in fd_hessian");
        return g;
    };

    const Vector g0 = forward.eval(theta);
    require_finite(g0, "forward evaluation in fd_hessian");
    HessianTensor out(static_cast<std::size_t>(w), Matrix::Zero(d, d));
    for (Eigen::Index i = 0; i < d; ++i) {
        const Vector diag = (eval_at(i, 1.0, i, 0.0) - 2.0 * g0 + eval_at(i, -1.0, i, 0.0)) / (h[i] * h[i]);
        for (Eigen::Index k = 0; k < w; ++k) out[k](i, i) = diag[k];
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const Vector mixed = (eval_at(i, 1, j, 1) - eval_at(i, 1, j, -1) - eval_at(i, -1, j, 1) +
                                  eval_at(i, -1, j, -1)) /
                                 (4.0 * h[i] * h[j]);
            for (Eigen::Index k = 0; k < w; ++k) out[k](i, j) = out[k](j, i) = mixed[k];
        }
    }
    return out;
}

Matrix jacobian_of(const ForwardMap& forward, const Vector& theta) {
    Matrix j = forward.has_jacobian() ? forward.jacobian(theta) : fd_jacobian(forward, theta);
    if (!j.allFinite()) throw NumericalError("non-finite Jacobian");
    return j;
}

HessianTensor hessian_of(const ForwardMap& forward, const Vector& theta) {
    HessianTensor h = forward.has_hessian() ? forward.hessian(theta) : fd_hessian(forward, theta);
    for (const auto& m : h)
        if (!m.allFinite()) throw NumericalError("non-finite Hessian");
    return h;
}

}  // namespace mleig
