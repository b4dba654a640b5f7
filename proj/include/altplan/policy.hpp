#pragma once

// Allocation policies (randomized replicated factorial, sequential
// D-optimal, sequential EI) and the approx/exact decision rules.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "altplan/model.hpp"
#include "altplan/update.hpp"

namespace altplan {

enum class PolicyKind { FactorialRandomized, SeqDOptimal, SeqEI };
enum class DecisionTrack { Approx, ExactRefit };

/// Short labels used in files and the HTTP API: Design, SeqD, SeqEI; approx, exact.
std::string_view to_string(PolicyKind kind);
std::string_view to_string(DecisionTrack track);
std::optional<PolicyKind> parse_policy(std::string_view s);
std::optional<DecisionTrack> parse_track(std::string_view s);

/// One cell of the materials x stresses grid.
struct GridCell {
  std::size_t z_index = 0;
  std::size_t v_index = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
  friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

/// Cycles the K*M factorial cells one replicate at a time up to n_total runs,
/// then shuffles the whole list with the given seed.
std::vector<GridCell> build_factorial_schedule(const CandidateSet& cands, std::size_t n_total,
                                               std::uint64_t seed);

/// A chosen run. `score` is the EI value for SeqEI, x' Sigma x for SeqD and
/// zero for the factorial schedule.
struct DesignChoice {
  GridCell cell;
  double score = 0.0;
};

class PolicyState {
 public:
  /// For FactorialRandomized, builds the n_total-run schedule from rng_seed.
  PolicyState(PolicyKind kind, const CandidateSet& cands, std::size_t n_total,
              std::uint64_t rng_seed);
  static PolicyState sequential(PolicyKind kind, std::uint64_t rng_seed = 0);

  PolicyKind kind() const { return kind_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  std::size_t cursor() const { return cursor_; }
  const std::optional<std::vector<GridCell>>& schedule() const { return schedule_; }

  /// Picks the next run and advances the factorial cursor. Throws
  /// ScheduleExhausted past the end of a factorial schedule.
  DesignChoice next_choice(const PosteriorState& belief, const CandidateSet& cands);
  DesignPoint next_design(const PosteriorState& belief, const CandidateSet& cands);

 private:
  PolicyState(PolicyKind kind, std::uint64_t seed) : kind_(kind), rng_seed_(seed) {}

  PolicyKind kind_;
  std::optional<std::vector<GridCell>> schedule_;
  std::size_t cursor_ = 0;
  std::uint64_t rng_seed_ = 0;
};

/// argmax over the grid of x' Sigma_n x; ties go to the smallest cell.
DesignChoice seq_d_optimal(const PosteriorState& belief, const CandidateSet& cands);

struct Decision {
  std::size_t best = 0;
  bool fell_back = false;            // exact refit failed, approx belief used
  std::optional<Vector> beta_hat;    // set when the refit succeeded
};

/// Approx: current_best on the belief. ExactRefit: censored MLE on all data
/// with sigma fixed, warm-started from `init` (or the belief mean).
Decision decide_best(DecisionTrack track, const PosteriorState& belief,
                     const std::vector<Observation>& data, const CandidateSet& cands,
                     double noise_var, const std::optional<Vector>& init = std::nullopt);

}  // namespace altplan
