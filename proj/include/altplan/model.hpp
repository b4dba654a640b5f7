#pragma once

// Design points, observations, the coefficient belief and the feature
// expansion x(z, v) = (1, v, z, z (x) v).

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "altplan/numerics.hpp"

namespace altplan {

/// A material setting z (p features) tested at stress v (d factors).
struct DesignPoint {
  Vector z;
  Vector v;

  Eigen::Index p() const { return z.size(); }
  Eigen::Index d() const { return v.size(); }

  /// Throws DimensionError for empty or non-finite vectors.
  void validate() const;
};

/// Length of the feature vector for p material features and d stress factors.
constexpr Eigen::Index feature_length(Eigen::Index p, Eigen::Index d) { return (p + 1) * (d + 1); }

/// (1, v, z, z (x) v) with the interaction block laid out z-major:
/// z1 v1, ..., z1 vd, z2 v1, ..., zp vd.
Vector feature_map(const DesignPoint& dp);

/// One test unit. `failed` is the failure indicator; `y` is the log lifetime
/// and only meaningful when failed. `log_tau` is the log observation-time bound.
struct Observation {
  DesignPoint design;
  double log_tau = 0.0;
  bool failed = false;
  double y = 0.0;

  /// Throws std::invalid_argument when a recorded failure lies past log_tau.
  void validate() const;
};

/// Gaussian belief N(theta, sigma_mat) over the regression coefficients,
/// with known noise variance.
struct PosteriorState {
  Vector theta;
  Matrix sigma_mat;
  double noise_var = 1.0;
  std::uint64_t n = 0;

  Eigen::Index dim() const { return theta.size(); }

  static PosteriorState diffuse(Eigen::Index dim, double noise_var, double prior_var = 100.0);

  /// Checks sizes, noise_var > 0, symmetry and PSD-with-jitter.
  void validate() const;
};

/// Candidate materials Z, lab stress grid V and the target stress v*.
struct CandidateSet {
  std::vector<Vector> materials;
  std::vector<Vector> stresses;
  Vector target_stress;

  std::size_t num_materials() const { return materials.size(); }
  std::size_t num_stresses() const { return stresses.size(); }
  Eigen::Index p() const { return materials.empty() ? 0 : materials.front().size(); }
  Eigen::Index d() const { return target_stress.size(); }
  Eigen::Index feature_dim() const { return feature_length(p(), d()); }

  DesignPoint design(std::size_t z_index, std::size_t v_index) const;
  DesignPoint target(std::size_t z_index) const;
  /// x(z_k, v*) for every material, one per row.
  Matrix target_features() const;

  /// Throws ConfigError listing every violated invariant.
  void validate() const;
};

/// Posterior mean log lifetime x(dp)' theta.
double mean_log_life(const PosteriorState& state, const DesignPoint& dp);

// Structured-text serialization. Field names: theta, sigma_mat (row-major
// nested arrays), noise_var, n; materials, stresses, target_stress.
nlohmann::json to_json(const PosteriorState& state);
PosteriorState posterior_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CandidateSet& cands);
CandidateSet candidates_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace altplan
