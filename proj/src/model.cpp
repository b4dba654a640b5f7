#include "altplan/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "altplan/errors.hpp"

namespace altplan {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

void DesignPoint::validate() const {
  if (z.size() < 1) throw DimensionError("design point: material vector z is empty");
  if (v.size() < 1) throw DimensionError("design point: stress vector v is empty");
  if (!all_finite(z) || !all_finite(v)) throw DimensionError("design point: non-finite entry");
}

Vector feature_map(const DesignPoint& dp) {
  const Eigen::Index p = dp.p();
  const Eigen::Index d = dp.d();
  Vector x(feature_length(p, d));
  x(0) = 1.0;
  x.segment(1, d) = dp.v;
  x.segment(1 + d, p) = dp.z;
  Eigen::Index at = 1 + d + p;
  for (Eigen::Index i = 0; i < p; ++i) {
    x.segment(at, d) = dp.z(i) * dp.v;
    at += d;
  }
  return x;
}

void Observation::validate() const {
  design.validate();
  if (!std::isfinite(log_tau)) throw std::invalid_argument("observation: log_tau must be finite");
  if (failed) {
    if (!std::isfinite(y)) throw std::invalid_argument("observation: log lifetime must be finite");
    if (y > log_tau) {
      throw std::invalid_argument("observation: failure recorded after the observation time");
    }
  }
}

PosteriorState PosteriorState::diffuse(Eigen::Index dim, double noise_var, double prior_var) {
  PosteriorState s;
  s.theta = Vector::Zero(dim);
  s.sigma_mat = prior_var * Matrix::Identity(dim, dim);
  s.noise_var = noise_var;
  s.n = 0;
  return s;
}

void PosteriorState::validate() const {
  require_square(sigma_mat, theta.size(), "posterior covariance");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
    throw std::invalid_argument("posterior: noise_var must be positive and finite");
  }
  if (!theta.allFinite() || !sigma_mat.allFinite()) {
    throw std::invalid_argument("posterior: non-finite entries");
  }
  const double asym = (sigma_mat - sigma_mat.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, sigma_mat.cwiseAbs().maxCoeff());
  if (asym > 1e-9 * scale) throw std::invalid_argument("posterior: covariance is not symmetric");
  if (!is_psd_with_jitter(sigma_mat)) {
    throw std::invalid_argument("posterior: covariance is not positive semidefinite");
  }
}

DesignPoint CandidateSet::design(std::size_t z_index, std::size_t v_index) const {
  return DesignPoint{materials.at(z_index), stresses.at(v_index)};
}

DesignPoint CandidateSet::target(std::size_t z_index) const {
  return DesignPoint{materials.at(z_index), target_stress};
}

Matrix CandidateSet::target_features() const {
  Matrix out(static_cast<Eigen::Index>(materials.size()), feature_dim());
  for (std::size_t k = 0; k < materials.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = feature_map(target(k)).transpose();
  }
  return out;
}

void CandidateSet::validate() const {
  std::vector<ConfigError::Field> errs;
  if (materials.empty()) errs.push_back({"materials", "at least one material is required"});
  if (stresses.empty()) errs.push_back({"stresses", "at least one stress level is required"});
  if (target_stress.size() < 1) errs.push_back({"target_stress", "must be a non-empty vector"});
  if (!target_stress.allFinite()) errs.push_back({"target_stress", "entries must be finite"});

  const Eigen::Index p = materials.empty() ? 0 : materials.front().size();
  if (!materials.empty() && p < 1) errs.push_back({"materials", "material vectors must be non-empty"});
  for (std::size_t i = 0; i < materials.size(); ++i) {
    const std::string name = "materials[" + std::to_string(i) + "]";
    if (materials[i].size() != p) errs.push_back({name, "all materials must have the same length"});
    if (!materials[i].allFinite()) errs.push_back({name, "entries must be finite"});
    for (std::size_t j = 0; j < i; ++j) {
      if (materials[j].size() == materials[i].size() && materials[j] == materials[i]) {
        errs.push_back({name, "duplicates materials[" + std::to_string(j) + "]"});
      }
    }
  }
  for (std::size_t i = 0; i < stresses.size(); ++i) {
    const std::string name = "stresses[" + std::to_string(i) + "]";
    if (stresses[i].size() != target_stress.size()) {
      errs.push_back({name, "length must match target_stress"});
    }
    if (!stresses[i].allFinite()) errs.push_back({name, "entries must be finite"});
    for (std::size_t j = 0; j < i; ++j) {
      if (stresses[j].size() == stresses[i].size() && stresses[j] == stresses[i]) {
        errs.push_back({name, "duplicates stresses[" + std::to_string(j) + "]"});
      }
    }
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));
}

double mean_log_life(const PosteriorState& state, const DesignPoint& dp) {
  const Vector x = feature_map(dp);
  require_size(state.theta, x.size(), "mean_log_life theta");
  return x.dot(state.theta);
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument("expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

nlohmann::json to_json(const PosteriorState& state) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < state.sigma_mat.rows(); ++r) {
    rows.push_back(vector_to_json(state.sigma_mat.row(r).transpose()));
  }
  return {{"theta", vector_to_json(state.theta)},
          {"sigma_mat", rows},
          {"noise_var", state.noise_var},
          {"n", state.n}};
}

PosteriorState posterior_from_json(const nlohmann::json& j) {
  PosteriorState s;
  s.theta = vector_from_json(j.at("theta"));
  const auto& rows = j.at("sigma_mat");
  if (!rows.is_array()) throw std::invalid_argument("sigma_mat must be an array of rows");
  s.sigma_mat.resize(static_cast<Eigen::Index>(rows.size()), s.theta.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector row = vector_from_json(rows[r]);
    require_size(row, s.theta.size(), "sigma_mat row");
    s.sigma_mat.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  s.noise_var = j.at("noise_var").get<double>();
  s.n = j.value("n", std::uint64_t{0});
  s.validate();
  return s;
}

nlohmann::json to_json(const CandidateSet& cands) {
  nlohmann::json mats = nlohmann::json::array();
  for (const auto& z : cands.materials) mats.push_back(vector_to_json(z));
  nlohmann::json str = nlohmann::json::array();
  for (const auto& v : cands.stresses) str.push_back(vector_to_json(v));
  return {{"materials", mats}, {"stresses", str}, {"target_stress", vector_to_json(cands.target_stress)}};
}

CandidateSet candidates_from_json(const nlohmann::json& j) {
  std::vector<ConfigError::Field> errs;
  CandidateSet c;
  auto read_list = [&](const char* key, std::vector<Vector>& out) {
    if (!j.contains(key) || !j.at(key).is_array()) {
      errs.push_back({key, "must be an array of numeric arrays"});
      return;
    }
    for (const auto& item : j.at(key)) {
      try {
        out.push_back(vector_from_json(item));
      } catch (const std::exception& e) {
        errs.push_back({key, e.what()});
      }
    }
  };
  read_list("materials", c.materials);
  read_list("stresses", c.stresses);
  if (!j.contains("target_stress")) {
    errs.push_back({"target_stress", "is required"});
  } else {
    try {
      c.target_stress = vector_from_json(j.at("target_stress"));
    } catch (const std::exception& e) {
      errs.push_back({"target_stress", e.what()});
    }
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));
  c.validate();
  return c;
}

}  // namespace altplan
