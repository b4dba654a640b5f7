#include "altplan/policy.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "altplan/acquisition.hpp"
#include "altplan/errors.hpp"

namespace altplan {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FactorialRandomized: return "Design";
    case PolicyKind::SeqDOptimal: return "SeqD";
    case PolicyKind::SeqEI: return "SeqEI";
  }
  return "?";
}

std::string_view to_string(DecisionTrack track) {
  return track == DecisionTrack::Approx ? "approx" : "exact";
}

std::optional<PolicyKind> parse_policy(std::string_view s) {
  if (s == "Design" || s == "FactorialRandomized") return PolicyKind::FactorialRandomized;
  if (s == "SeqD" || s == "SeqDOptimal") return PolicyKind::SeqDOptimal;
  if (s == "SeqEI") return PolicyKind::SeqEI;
  return std::nullopt;
}

std::optional<DecisionTrack> parse_track(std::string_view s) {
  if (s == "approx" || s == "Approx") return DecisionTrack::Approx;
  if (s == "exact" || s == "ExactRefit") return DecisionTrack::ExactRefit;
  return std::nullopt;
}

std::vector<GridCell> build_factorial_schedule(const CandidateSet& cands, std::size_t n_total,
                                               std::uint64_t seed) {
  if (n_total < 1) throw std::invalid_argument("factorial schedule needs at least one run");
  const std::size_t cells = cands.num_materials() * cands.num_stresses();
  if (cells == 0) throw std::invalid_argument("factorial schedule needs a non-empty grid");
  std::vector<GridCell> out;
  out.reserve(n_total);
  for (std::size_t i = 0; i < n_total; ++i) {
    const std::size_t c = i % cells;
    out.push_back({c / cands.num_stresses(), c % cands.num_stresses()});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

PolicyState::PolicyState(PolicyKind kind, const CandidateSet& cands, std::size_t n_total,
                         std::uint64_t rng_seed)
    : kind_(kind), rng_seed_(rng_seed) {
  if (kind == PolicyKind::FactorialRandomized) {
    schedule_ = build_factorial_schedule(cands, n_total, rng_seed);
  }
}

PolicyState PolicyState::sequential(PolicyKind kind, std::uint64_t rng_seed) {
  if (kind == PolicyKind::FactorialRandomized) {
    throw std::invalid_argument("factorial policy needs a schedule length");
  }
  return PolicyState(kind, rng_seed);
}

DesignChoice seq_d_optimal(const PosteriorState& belief, const CandidateSet& cands) {
  DesignChoice best{{0, 0}, -1.0};
  for (std::size_t j = 0; j < cands.num_materials(); ++j) {
    for (std::size_t m = 0; m < cands.num_stresses(); ++m) {
      const Vector x = feature_map(cands.design(j, m));
      const double q = spd_quadratic_form(belief.sigma_mat, x);
      if (q > best.score) best = {{j, m}, q};
    }
  }
  return best;
}

DesignChoice PolicyState::next_choice(const PosteriorState& belief, const CandidateSet& cands) {
  switch (kind_) {
    case PolicyKind::FactorialRandomized: {
      if (!schedule_ || cursor_ >= schedule_->size()) {
        throw ScheduleExhausted("factorial schedule has no runs left");
      }
      return {(*schedule_)[cursor_++], 0.0};
    }
    case PolicyKind::SeqDOptimal:
      return seq_d_optimal(belief, cands);
    case PolicyKind::SeqEI: {
      const EiScore s = select_next(belief, cands);
      return {{s.z_index, s.v_index}, s.value};
    }
  }
  throw std::logic_error("unknown policy kind");
}

DesignPoint PolicyState::next_design(const PosteriorState& belief, const CandidateSet& cands) {
  const DesignChoice c = next_choice(belief, cands);
  return cands.design(c.cell.z_index, c.cell.v_index);
}

Decision decide_best(DecisionTrack track, const PosteriorState& belief,
                     const std::vector<Observation>& data, const CandidateSet& cands,
                     double noise_var, const std::optional<Vector>& init) {
  if (track == DecisionTrack::Approx) return {current_best(belief, cands), false, std::nullopt};
  if (data.empty()) return {current_best(belief, cands), true, std::nullopt};
  try {
    const MleFit fit = mle_refit(data, noise_var, init ? *init : belief.theta);
    return {best_by_coefficients(fit.beta_hat, cands), false, fit.beta_hat};
  } catch (const NonIdentifiable&) {
    return {current_best(belief, cands), true, std::nullopt};
  }
}

}  // namespace altplan
