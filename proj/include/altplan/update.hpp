#pragma once

// Sequential belief updates for the censored log-normal model and the
// batch censored maximum-likelihood refit used by the exact decision track.

#include <cstddef>
#include <vector>

#include "altplan/model.hpp"

namespace altplan {

/// Direct: rank-one covariance downdate. Woodbury: precision accumulation
/// Sigma^-1 += x x' / sigma^2 with the mean written in terms of Sigma_{n+1}.
enum class UpdateForm { Direct, Woodbury };

/// Exact Gaussian update for an uncensored log lifetime y.
PosteriorState conjugate_update(const PosteriorState& state, const Vector& x, double y);

/// Moment-matched update for a unit still running at log_tau. The mean gets the
/// truncated-normal shift; the covariance gets the same rank-one downdate as
/// an uncensored response.
PosteriorState censored_update(const PosteriorState& state, const Vector& x, double log_tau);

/// Covariance of the moment-matched censored posterior with the full
/// truncated-normal variance term. Diagnostic only; the sequential loop uses
/// the plain downdate.
Matrix censored_posterior_covariance(const PosteriorState& state, const Vector& x, double log_tau);

/// Dispatch on the failure indicator. `value` is y when failed, log_tau otherwise.
PosteriorState absorb(const PosteriorState& state, const Vector& x, bool failed, double value,
                      UpdateForm form = UpdateForm::Direct);

PosteriorState absorb(const PosteriorState& state, const Observation& obs,
                      UpdateForm form = UpdateForm::Direct);

/// Rows of a censored regression problem.
struct CensoredData {
  Matrix X;                  // one design row per unit
  Vector value;              // y for failures, log_tau for censored units
  std::vector<bool> failed;

  static CensoredData from_observations(const std::vector<Observation>& data);
  std::size_t size() const { return failed.size(); }
};

/// Censored log-likelihood with fixed sigma, including the 1/T Jacobian of
/// each observed lifetime.
double censored_loglik(const CensoredData& data, const Vector& beta, double noise_var);
Vector censored_loglik_gradient(const CensoredData& data, const Vector& beta, double noise_var);

struct MleFit {
  Vector beta_hat;
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct MleOptions {
  double gradient_tolerance = 1e-8;
  std::size_t max_iterations = 500;
  int max_halvings = 30;
};

/// Damped Newton ascent on the censored log-likelihood. Throws
/// NonIdentifiable when the information matrix degenerates in some direction
/// (typically all units in that direction are censored) or when the line
/// search cannot make progress.
MleFit mle_refit(const CensoredData& data, double noise_var, const Vector& init,
                 const MleOptions& opts = {});
MleFit mle_refit(const std::vector<Observation>& data, double noise_var, const Vector& init,
                 const MleOptions& opts = {});

}  // namespace altplan
