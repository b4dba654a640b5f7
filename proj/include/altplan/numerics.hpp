#pragma once

// Scalar normal-distribution helpers and the small dense linear algebra
// shared by the update, acquisition and policy code.

#include <Eigen/Dense>

namespace altplan {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Mean and variance of a normal variable conditioned on exceeding a bound.
struct TruncatedNormalMoments {
  double mean = 0.0;
  double variance = 0.0;
};

double norm_pdf(double x) noexcept;
double norm_cdf(double x) noexcept;

/// Upper tail 1 - Phi(x), without cancellation for large x.
double norm_sf(double x) noexcept;

/// log(1 - Phi(x)); finite for every finite x.
double log_norm_sf(double x) noexcept;

/// Inverse Mills ratio phi(eta) / (1 - Phi(eta)).
///
/// Below eta = 3 this is the direct quotient with an erfc-based tail; from 3
/// upward it is evaluated from the Laplace continued fraction, which stays
/// accurate long after the tail probability underflows.
double mills_lambda(double eta) noexcept;

/// Derivative of mills_lambda, lambda * (lambda - eta). Lies in (0, 1).
double mills_lambda_slope(double eta) noexcept;

/// Variance of a standard normal truncated to (alpha, inf): 1 + alpha*lambda - lambda^2.
/// Positive for every finite alpha.
double truncated_variance_factor(double alpha) noexcept;

/// Moments of N(mu, var) restricted to (lower, inf). Requires var > 0.
TruncatedNormalMoments truncated_normal_moments(double mu, double var, double lower);

/// u * Phi(u) + phi(u), i.e. E[max(u + G, 0)] for standard normal G.
double normal_loss(double u) noexcept;

/// x' S x. Throws DimensionError when sizes disagree.
double spd_quadratic_form(const Matrix& S, const Vector& x);

/// True when S + jitter * I admits a Cholesky factorization.
bool is_psd_with_jitter(const Matrix& S, double jitter = 1e-12);

/// Inverse of an SPD matrix via Cholesky. Throws SingularBelief on failure.
Matrix spd_inverse(const Matrix& S);

/// Throws DimensionError with `what` unless rows == cols == n.
void require_square(const Matrix& S, Eigen::Index n, const char* what);
void require_size(const Vector& v, Eigen::Index n, const char* what);

}  // namespace altplan
