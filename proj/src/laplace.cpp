#include "mleig/laplace.hpp"

#include <cmath>

#include "mleig/errors.hpp"

namespace mleig {

SpdSafeguard make_spd(const Matrix& m) {
    const Eigen::Index d = m.rows();
    const Matrix sym = 0.5 * (m + m.transpose());
    if (!sym.allFinite()) return {sym, 0.0, false};
    const double scale = std::abs(sym.trace()) / static_cast<double>(d);
    if (Eigen::LLT<Matrix>(sym).info() == Eigen::Success) return {sym, 0.0, true};
    if (!(scale > 0.0)) return {sym, 0.0, false};
    for (double c = 1e-10; c <= 1e-4 * (1.0 + 1e-9); c *= 10.0) {
        const double jitter = c * scale;
        Matrix candidate = sym;
        candidate.diagonal().array() += jitter;
        if (Eigen::LLT<Matrix>(candidate).info() == Eigen::Success) return {candidate, jitter, true};
    }
    return {sym, 0.0, false};
}

namespace {

Matrix inverse_spd(const Matrix& m) {
    return Eigen::LLT<Matrix>(m).solve(Matrix::Identity(m.rows(), m.cols()));
}

GaussianIS prior_fallback(const BayesModel& model, const Vector& theta_star) {
    return {GaussianDensity(theta_star, model.prior().gaussianized().covariance()), 0.0, 0.0, true};
}

}  // namespace

GaussianIS laplace_fit(const BayesModel& model, const Vector& theta_star, const Vector& y) {
    const auto& fwd = model.forward();
    const auto& noise = model.noise();
    const Eigen::Index w = fwd.out_dim();
    const double ne = model.replicates();
    if (theta_star.size() != model.theta_dim() || y.size() != model.data_dim())
        throw InvalidArgument("laplace_fit: dimension mismatch");

    const Vector g = fwd.eval(theta_star);
    if (!g.allFinite()) throw NumericalError("laplace_fit: non-finite forward evaluation");
    Vector residual_sum = Vector::Zero(w);
    for (int r = 0; r < model.replicates(); ++r) residual_sum += y.segment(r * w, w) - g;
    const Vector weighted_residual = noise.whiten_solve(residual_sum);  // sum_r S^-1 E_r

    const Matrix jac = -jacobian_of(fwd, theta_star);
    const HessianTensor hess = hessian_of(fwd, theta_star);

    Matrix newton = ne * jac.transpose() * noise.whiten_solve_matrix(jac) -
                    model.prior().hess_log_pdf(theta_star);
    for (Eigen::Index k = 0; k < w; ++k) newton -= weighted_residual[k] * hess[static_cast<std::size_t>(k)];

    const auto newton_spd = make_spd(newton);
    if (!newton_spd.ok) return prior_fallback(model, theta_star);
    const Vector theta_hat =
        theta_star - Eigen::LLT<Matrix>(newton_spd.matrix).solve(jac.transpose() * weighted_residual);
    if (!theta_hat.allFinite()) throw NumericalError("laplace_fit: non-finite mean");

    const Matrix jac_hat = -jacobian_of(fwd, theta_hat);
    const Matrix precision = ne * jac_hat.transpose() * noise.whiten_solve_matrix(jac_hat) -
                             model.prior().hess_log_pdf(theta_hat);
    const auto precision_spd = make_spd(precision);
    if (!precision_spd.ok) return prior_fallback(model, theta_star);
    Matrix cov = inverse_spd(precision_spd.matrix);
    cov = 0.5 * (cov + cov.transpose());
    try {
        return {GaussianDensity(theta_hat, cov), newton_spd.jitter, precision_spd.jitter, false};
    } catch (const InvalidArgument&) {
        return prior_fallback(model, theta_star);
    }
}

double log_is_weight(const BayesModel& model, const GaussianIS& is, const Vector& theta, const Vector& y) {
    const double log_q = is.fit.log_pdf(theta);
    if (!std::isfinite(log_q)) throw NumericalError("log_is_weight: proposal density vanishes");
    return log_likelihood(model, theta, y) + model.prior().log_pdf(theta) - log_q;
}

}  // namespace mleig
