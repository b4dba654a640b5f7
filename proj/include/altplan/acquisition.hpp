#pragma once

// Expected-improvement (knowledge-gradient) scoring of candidate runs and
// the current-best material at the target stress.

#include <cstddef>
#include <span>
#include <vector>

#include "altplan/model.hpp"

namespace altplan {

/// Posterior mean of material k at v* as a function of the standardized
/// outcome G of the next run: intercept + slope * G.
struct KgLine {
  double intercept = 0.0;
  double slope = 0.0;
  std::size_t material_index = 0;
};

struct EiScore {
  double value = 0.0;
  std::size_t z_index = 0;
  std::size_t v_index = 0;
};

struct PredictiveParams {
  double mean = 0.0;
  double var = 0.0;
};

/// y_{n+1} ~ N(x' theta, sigma^2 + x' Sigma x).
PredictiveParams predictive_params(const PosteriorState& state, const Vector& x);

std::vector<KgLine> kg_lines(const PosteriorState& state, const DesignPoint& probe,
                             const CandidateSet& cands);

/// E[max_k (a_k + b_k G)] - max_k a_k for standard normal G. Handles
/// arbitrary slope order and signs, equal slopes and dominated lines.
double expected_max_gain(std::span<const KgLine> lines);

double ei_score(const PosteriorState& state, const DesignPoint& probe, const CandidateSet& cands);

/// Scores of every (material, stress) pair, row-major by material.
std::vector<EiScore> ei_table(const PosteriorState& state, const CandidateSet& cands);

/// Maximizer over the full grid; ties go to the smallest (z_index, v_index).
EiScore select_next(const PosteriorState& state, const CandidateSet& cands);

/// argmax_k x(z_k, v*)' theta; ties go to the smallest index.
std::size_t current_best(const PosteriorState& state, const CandidateSet& cands);
std::size_t best_by_coefficients(const Vector& beta, const CandidateSet& cands);

/// Posterior mean and standard deviation of each material's log life at v*.
struct MaterialSummary {
  std::size_t material_index = 0;
  double mean = 0.0;
  double sd = 0.0;
};
std::vector<MaterialSummary> target_summary(const PosteriorState& state, const CandidateSet& cands);

}  // namespace altplan
