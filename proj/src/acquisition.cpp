#include "altplan/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "altplan/errors.hpp"

namespace altplan {

namespace {

constexpr double kDegenerateVariance = 1e-12;

}  // namespace

PredictiveParams predictive_params(const PosteriorState& state, const Vector& x) {
  require_size(x, state.dim(), "predictive_params x");
  require_square(state.sigma_mat, state.dim(), "predictive_params covariance");
  return {x.dot(state.theta), state.noise_var + spd_quadratic_form(state.sigma_mat, x)};
}

std::vector<KgLine> kg_lines(const PosteriorState& state, const DesignPoint& probe,
                             const CandidateSet& cands) {
  const Vector x = feature_map(probe);
  const PredictiveParams pred = predictive_params(state, x);
  const Matrix targets = cands.target_features();
  if (targets.cols() != state.dim()) throw DimensionError("kg_lines: candidate feature length");

  const Vector means = targets * state.theta;
  Vector slopes = Vector::Zero(targets.rows());
  if (pred.var >= kDegenerateVariance) slopes = targets * (state.sigma_mat * x) / std::sqrt(pred.var);

  std::vector<KgLine> lines(cands.num_materials());
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    lines[k] = {means(r), slopes(r), k};
  }
  return lines;
}

double expected_max_gain(std::span<const KgLine> lines) {
  if (lines.size() < 2) return 0.0;

  std::vector<KgLine> sorted(lines.begin(), lines.end());
  std::sort(sorted.begin(), sorted.end(), [](const KgLine& l, const KgLine& r) {
    return l.slope != r.slope ? l.slope < r.slope : l.intercept < r.intercept;
  });

  // Upper envelope over G from -inf to +inf: slopes increase along it and so
  // do the breakpoints where one line takes over from the previous one.
  struct Piece {
    double intercept;
    double slope;
    double from;  // breakpoint with the previous envelope line
  };
  std::vector<Piece> hull;
  hull.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // Equal slopes: only the last (largest intercept) can be on the envelope.
    if (i + 1 < sorted.size() && sorted[i + 1].slope == sorted[i].slope) continue;
    const KgLine& line = sorted[i];
    double from = -std::numeric_limits<double>::infinity();
    while (!hull.empty()) {
      const Piece& top = hull.back();
      from = (top.intercept - line.intercept) / (line.slope - top.slope);
      if (from <= top.from) {
        hull.pop_back();
        from = -std::numeric_limits<double>::infinity();
      } else {
        break;
      }
    }
    hull.push_back({line.intercept, line.slope, from});
  }

  double gain = 0.0;
  for (std::size_t i = 1; i < hull.size(); ++i) {
    gain += (hull[i].slope - hull[i - 1].slope) * normal_loss(-std::abs(hull[i].from));
  }
  return std::max(gain, 0.0);
}

double ei_score(const PosteriorState& state, const DesignPoint& probe, const CandidateSet& cands) {
  const std::vector<KgLine> lines = kg_lines(state, probe, cands);
  return expected_max_gain(lines);
}

std::vector<EiScore> ei_table(const PosteriorState& state, const CandidateSet& cands) {
  std::vector<EiScore> table;
  table.reserve(cands.num_materials() * cands.num_stresses());
  for (std::size_t j = 0; j < cands.num_materials(); ++j) {
    for (std::size_t m = 0; m < cands.num_stresses(); ++m) {
      table.push_back({ei_score(state, cands.design(j, m), cands), j, m});
    }
  }
  return table;
}

EiScore select_next(const PosteriorState& state, const CandidateSet& cands) {
  const std::vector<EiScore> table = ei_table(state, cands);
  EiScore best = table.front();
  for (const EiScore& s : table) {
    if (s.value > best.value) best = s;
  }
  return best;
}

std::size_t best_by_coefficients(const Vector& beta, const CandidateSet& cands) {
  const Matrix targets = cands.target_features();
  require_size(beta, targets.cols(), "best_by_coefficients beta");
  const Vector means = targets * beta;
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < means.size(); ++k) {
    if (means(k) > means(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(k);
  }
  return best;
}

std::size_t current_best(const PosteriorState& state, const CandidateSet& cands) {
  return best_by_coefficients(state.theta, cands);
}

std::vector<MaterialSummary> target_summary(const PosteriorState& state,
                                            const CandidateSet& cands) {
  const Matrix targets = cands.target_features();
  require_size(state.theta, targets.cols(), "target_summary theta");
  std::vector<MaterialSummary> out;
  out.reserve(cands.num_materials());
  for (Eigen::Index k = 0; k < targets.rows(); ++k) {
    const Vector x = targets.row(k).transpose();
    const double var = std::max(0.0, spd_quadratic_form(state.sigma_mat, x));
    out.push_back({static_cast<std::size_t>(k), x.dot(state.theta), std::sqrt(var)});
  }
  return out;
}

}  // namespace altplan
