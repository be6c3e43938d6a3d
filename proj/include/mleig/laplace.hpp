#pragma once

#include "mleig/model.hpp"

namespace mleig {

/// Gaussian importance distribution q(theta | y) = N(theta_hat, Sigma_hat).
struct GaussianIS {
    GaussianDensity fit;
    /// Jitter added to the Newton matrix and to the precision, 0 if none.
    double newton_jitter = 0.0;
    double precision_jitter = 0.0;
    /// True when the safeguard ladder failed and the prior surrogate is used.
    bool fell_back = false;
};

struct SpdSafeguard {
    Matrix matrix;
    double jitter = 0.0;
    bool ok = false;
};

/// Makes a symmetric matrix positive definite by adding c (trace/d) I with
/// c = 0, 1e-10, 1e-9, ..., 1e-4. ok is false if every rung fails.
SpdSafeguard make_spd(const Matrix& m);

/// One-step Laplace fit around theta_star for observed y.
///
/// With J = -dg/dtheta, H = -d2g/dtheta2 and E = y - g(theta_star) (blocks
/// summed over replicates):
///   theta_hat = theta_star - (J'S^-1J + H'S^-1E - hess log p)^-1 J'S^-1E
///   Sigma_hat = (J(theta_hat)'S^-1J(theta_hat) - hess log p(theta_hat))^-1
/// where H'S^-1E contracts the w index of H against S^-1 E.
/// Throws NumericalError on non-finite derivatives.
GaussianIS laplace_fit(const BayesModel& model, const Vector& theta_star, const Vector& y);

/// log p(y|theta) + log p(theta) - log q(theta|y).
double log_is_weight(const BayesModel& model, const GaussianIS& is, const Vector& theta, const Vector& y);

}  // namespace mleig
