#include "altplan/numerics.hpp"

#include <cmath>
#include <string>

#include "altplan/errors.hpp"

namespace altplan {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;
constexpr double kInvSqrt2 = 0.7071067811865475244008443621048490392848359376885;

// Above this threshold the continued fraction is used for the Mills ratio.
constexpr double kContinuedFractionFrom = 3.0;
constexpr int kContinuedFractionDepth = 128;

// Laplace continued fraction for the reciprocal Mills ratio:
//   (1 - Phi(x)) / phi(x) = 1 / (x + 1 / (x + 2 / (x + 3 / ...))).
// Returns gap = lambda - x = 1 / (x + tail) and tail = 2 / (x + 3 / ...).
struct MillsTail {
  double gap;
  double tail;
};

MillsTail mills_tail(double x) noexcept {
  double t = 0.0;
  for (int k = kContinuedFractionDepth; k >= 2; --k) t = k / (x + t);
  return {1.0 / (x + t), t};
}

}  // namespace

double norm_pdf(double x) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_cdf(double x) noexcept { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_sf(double x) noexcept { return 0.5 * std::erfc(x * kInvSqrt2); }

double log_norm_sf(double x) noexcept {
  if (x < kContinuedFractionFrom) return std::log(norm_sf(x));
  // 1 - Phi(x) = phi(x) / lambda(x)
  return -0.5 * x * x + std::log(kInvSqrt2Pi) - std::log(mills_lambda(x));
}

double mills_lambda(double eta) noexcept {
  if (eta >= kContinuedFractionFrom) return eta + mills_tail(eta).gap;
  return norm_pdf(eta) / norm_sf(eta);
}

double mills_lambda_slope(double eta) noexcept {
  if (eta >= kContinuedFractionFrom) {
    const auto [gap, tail] = mills_tail(eta);
    // lambda * gap = 1 - gap * (tail - gap)
    return 1.0 - gap * (tail - gap);
  }
  const double lam = mills_lambda(eta);
  return lam * (lam - eta);
}

double truncated_variance_factor(double alpha) noexcept {
  if (alpha >= kContinuedFractionFrom) {
    const auto [gap, tail] = mills_tail(alpha);
    return gap * (tail - gap);
  }
  const double lam = mills_lambda(alpha);
  return 1.0 + alpha * lam - lam * lam;
}

TruncatedNormalMoments truncated_normal_moments(double mu, double var, double lower) {
  if (!(var > 0.0)) throw std::domain_error("truncated_normal_moments: var must be positive");
  const double s = std::sqrt(var);
  const double alpha = (lower - mu) / s;
  return {mu + s * mills_lambda(alpha), var * truncated_variance_factor(alpha)};
}

double normal_loss(double u) noexcept { return u * norm_cdf(u) + norm_pdf(u); }

void require_square(const Matrix& S, Eigen::Index n, const char* what) {
  if (S.rows() != n || S.cols() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) + "x" +
                         std::to_string(n) + ", got " + std::to_string(S.rows()) + "x" +
                         std::to_string(S.cols()));
  }
}

void require_size(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
  }
}

double spd_quadratic_form(const Matrix& S, const Vector& x) {
  require_square(S, x.size(), "spd_quadratic_form");
  return x.dot(S * x);
}

bool is_psd_with_jitter(const Matrix& S, double jitter) {
  if (S.rows() != S.cols()) return false;
  Matrix shifted = S;
  shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  return llt.info() == Eigen::Success;
}

Matrix spd_inverse(const Matrix& S) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw SingularBelief("matrix is not positive definite");
  Matrix inv = llt.solve(Matrix::Identity(S.rows(), S.cols()));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace altplan
