#include "altplan/update.hpp"

#include <cmath>
#include <numbers>

#include "altplan/errors.hpp"

namespace altplan {

namespace {

struct Predictive {
  Vector sigma_x;  // Sigma_n x
  double var;      // sigma^2 + x' Sigma_n x
};

Predictive predictive(const PosteriorState& state, const Vector& x) {
  require_size(x, state.dim(), "update feature vector");
  require_square(state.sigma_mat, state.dim(), "update covariance");
  Vector sx = state.sigma_mat * x;
  return {std::move(sx), state.noise_var + x.dot(state.sigma_mat * x)};
}

Matrix downdate(const Matrix& sigma, const Predictive& pred) {
  Matrix out = sigma - (pred.sigma_x * pred.sigma_x.transpose()) / pred.var;
  return 0.5 * (out + out.transpose());
}

PosteriorState woodbury_step(const PosteriorState& state, const Vector& x, bool failed,
                             double value) {
  const Predictive pred = predictive(state, x);
  Matrix precision = spd_inverse(state.sigma_mat);
  precision += (x * x.transpose()) / state.noise_var;

  PosteriorState next = state;
  next.sigma_mat = spd_inverse(precision);
  const Vector next_sigma_x = next.sigma_mat * x;
  const double resid_scale = failed
      ? (value - x.dot(state.theta)) / state.noise_var
      : mills_lambda((value - x.dot(state.theta)) / std::sqrt(pred.var)) * std::sqrt(pred.var) /
            state.noise_var;
  next.theta = state.theta + resid_scale * next_sigma_x;
  ++next.n;
  return next;
}

}  // namespace

PosteriorState conjugate_update(const PosteriorState& state, const Vector& x, double y) {
  const Predictive pred = predictive(state, x);
  PosteriorState next = state;
  next.theta = state.theta + ((y - x.dot(state.theta)) / pred.var) * pred.sigma_x;
  next.sigma_mat = downdate(state.sigma_mat, pred);
  ++next.n;
  return next;
}

PosteriorState censored_update(const PosteriorState& state, const Vector& x, double log_tau) {
  const Predictive pred = predictive(state, x);
  const double sd = std::sqrt(pred.var);
  const double eta = (log_tau - x.dot(state.theta)) / sd;
  PosteriorState next = state;
  next.theta = state.theta + (mills_lambda(eta) / sd) * pred.sigma_x;
  next.sigma_mat = downdate(state.sigma_mat, pred);
  ++next.n;
  return next;
}

Matrix censored_posterior_covariance(const PosteriorState& state, const Vector& x,
                                     double log_tau) {
  const Predictive pred = predictive(state, x);
  const double eta = (log_tau - x.dot(state.theta)) / std::sqrt(pred.var);
  const double keep = 1.0 - truncated_variance_factor(eta);
  Matrix out = state.sigma_mat - keep * (pred.sigma_x * pred.sigma_x.transpose()) / pred.var;
  return 0.5 * (out + out.transpose());
}

PosteriorState absorb(const PosteriorState& state, const Vector& x, bool failed, double value,
                      UpdateForm form) {
  if (form == UpdateForm::Woodbury) return woodbury_step(state, x, failed, value);
  return failed ? conjugate_update(state, x, value) : censored_update(state, x, value);
}

PosteriorState absorb(const PosteriorState& state, const Observation& obs, UpdateForm form) {
  return absorb(state, feature_map(obs.design), obs.failed, obs.failed ? obs.y : obs.log_tau,
                form);
}

CensoredData CensoredData::from_observations(const std::vector<Observation>& data) {
  CensoredData out;
  if (data.empty()) return out;
  const Eigen::Index dim = feature_length(data.front().design.p(), data.front().design.d());
  out.X.resize(static_cast<Eigen::Index>(data.size()), dim);
  out.value.resize(static_cast<Eigen::Index>(data.size()));
  out.failed.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector x = feature_map(data[i].design);
    require_size(x, dim, "observation features");
    const auto r = static_cast<Eigen::Index>(i);
    out.X.row(r) = x.transpose();
    out.value(r) = data[i].failed ? data[i].y : data[i].log_tau;
    out.failed.push_back(data[i].failed);
  }
  return out;
}

double censored_loglik(const CensoredData& data, const Vector& beta, double noise_var) {
  require_size(beta, data.X.cols(), "loglik beta");
  const double sigma = std::sqrt(noise_var);
  const double log_norm_const = std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi);
  const Vector mean = data.X * beta;
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double z = (data.value(r) - mean(r)) / sigma;
    if (data.failed[i]) {
      ll += -log_norm_const - 0.5 * z * z - data.value(r);
    } else {
      ll += log_norm_sf(z);
    }
  }
  return ll;
}

Vector censored_loglik_gradient(const CensoredData& data, const Vector& beta, double noise_var) {
  require_size(beta, data.X.cols(), "gradient beta");
  const double sigma = std::sqrt(noise_var);
  const Vector mean = data.X * beta;
  Vector weights(mean.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double z = (data.value(r) - mean(r)) / sigma;
    weights(r) = (data.failed[i] ? z : mills_lambda(z)) / sigma;
  }
  return data.X.transpose() * weights;
}

namespace {

// Negative Hessian of the log-likelihood.
Matrix information(const CensoredData& data, const Vector& beta, double noise_var) {
  const double sigma = std::sqrt(noise_var);
  const Vector mean = data.X * beta;
  Vector w(mean.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    w(r) = data.failed[i] ? 1.0 : mills_lambda_slope((data.value(r) - mean(r)) / sigma);
  }
  Matrix info = data.X.transpose() * w.asDiagonal() * data.X / noise_var;
  return 0.5 * (info + info.transpose());
}

// Smallest ratio d' I d / d' F d, where F is the information the same design
// would carry with every unit observed.
double relative_information(const Matrix& info, const Eigen::LLT<Matrix>& full) {
  const Matrix L = full.matrixL();
  const Matrix left = L.triangularView<Eigen::Lower>().solve(info);
  const Matrix scaled = L.triangularView<Eigen::Lower>().solve(left.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (scaled + scaled.transpose()),
                                            Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

constexpr double kMinRelativeInformation = 1e-6;

}  // namespace

MleFit mle_refit(const CensoredData& data, double noise_var, const Vector& init,
                 const MleOptions& opts) {
  if (data.size() == 0) throw std::invalid_argument("mle_refit: no observations");
  if (!(noise_var > 0.0)) throw std::invalid_argument("mle_refit: noise_var must be positive");
  const Eigen::Index dim = data.X.cols();
  require_size(init, dim, "mle_refit init");

  const Matrix full_info = data.X.transpose() * data.X / noise_var;
  Eigen::SelfAdjointEigenSolver<Matrix> full_eig(full_info, Eigen::EigenvaluesOnly);
  const double max_eig = full_eig.eigenvalues().maxCoeff();
  if (!(max_eig > 0.0) || full_eig.eigenvalues().minCoeff() <= 1e-12 * max_eig) {
    throw NonIdentifiable("mle_refit: design matrix is rank deficient");
  }
  const Eigen::LLT<Matrix> full_llt(full_info);

  MleFit fit;
  fit.beta_hat = init;
  fit.loglik = censored_loglik(data, fit.beta_hat, noise_var);

  for (fit.iterations = 0; fit.iterations < opts.max_iterations; ++fit.iterations) {
    const Vector grad = censored_loglik_gradient(data, fit.beta_hat, noise_var);
    const Matrix info = information(data, fit.beta_hat, noise_var);
    if (grad.cwiseAbs().maxCoeff() <= opts.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success ||
        relative_information(info, full_llt) < kMinRelativeInformation * 1e-6) {
      throw NonIdentifiable("mle_refit: information matrix is singular");
    }
    const Vector step = llt.solve(grad);

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, scale *= 0.5) {
      const Vector candidate = fit.beta_hat + scale * step;
      const double ll = censored_loglik(data, candidate, noise_var);
      if (std::isfinite(ll) && ll >= fit.loglik - 1e-12 * (1.0 + std::abs(fit.loglik))) {
        fit.beta_hat = candidate;
        fit.loglik = ll;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NonIdentifiable("mle_refit: line search failed to increase likelihood");
  }

  const Matrix info = information(data, fit.beta_hat, noise_var);
  if (relative_information(info, full_llt) < kMinRelativeInformation) {
    throw NonIdentifiable(
        "mle_refit: likelihood is flat in some direction (censored units only)");
  }
  return fit;
}

MleFit mle_refit(const std::vector<Observation>& data, double noise_var, const Vector& init,
                 const MleOptions& opts) {
  return mle_refit(CensoredData::from_observations(data), noise_var, init, opts);
}

}  // namespace altplan
