#pragma once

// Synthetic-truth simulation studies: truth generation, prior fitting,
// replication runs, probability-of-correct-selection curves and CSV output.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "json.hpp"

#include "altplan/model.hpp"
#include "altplan/policy.hpp"

namespace altplan {

using Rng = std::mt19937_64;

struct StudyMethod {
  PolicyKind policy = PolicyKind::SeqEI;
  DecisionTrack track = DecisionTrack::Approx;
  friend bool operator==(const StudyMethod&, const StudyMethod&) = default;
};

/// All six policy x track combinations in a fixed order.
std::vector<StudyMethod> all_methods();

struct StudyConfig {
  int K = 2;
  int d = 3;
  std::vector<std::vector<double>> stress_levels;  // per factor; default {0.5, 1}
  Vector target_stress;                            // default 0.1 in every factor
  double noise_sd = 0.1;
  double tau = 1.2;
  std::size_t n_steps = 50;
  std::size_t replications = 100;
  std::size_t prior_points_per_material = 20;
  std::vector<StudyMethod> methods;                // default all_methods()
  std::uint64_t seed = 1;
  double prior_var = 100.0;                        // diffuse prior Sigma_0 = prior_var * I
  std::size_t refit_every = 1;                     // exact-track refit frequency

  /// Fills in the documented defaults for empty fields.
  static StudyConfig defaults();

  /// Throws ConfigError naming every invalid field.
  void validate() const;

  /// Material k as K-1 dummy coordinates (level 1 is the all-zero baseline)
  /// and the full factorial grid of stress_levels.
  CandidateSet candidates() const;

  static StudyConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Signal-to-noise label for a noise level: coefficient scale 0.03 over sigma.
double signal_to_std(double noise_sd);

struct SyntheticTruth {
  Vector beta;
  double noise_sd = 0.1;
  std::size_t best_index = 0;
  double log_tau = 0.0;
};

/// Produces observations for a design. Implement this to drive studies from
/// something other than the linear log-normal model.
class TruthSimulator {
 public:
  virtual ~TruthSimulator() = default;
  virtual Observation simulate(const DesignPoint& dp, Rng& rng) const = 0;
  /// Index of the truly best material among the candidates.
  virtual std::size_t best_index() const = 0;
};

class LinearLogNormalTruth final : public TruthSimulator {
 public:
  explicit LinearLogNormalTruth(SyntheticTruth truth) : truth_(std::move(truth)) {}
  Observation simulate(const DesignPoint& dp, Rng& rng) const override;
  std::size_t best_index() const override { return truth_.best_index; }
  const SyntheticTruth& truth() const { return truth_; }

 private:
  SyntheticTruth truth_;
};

/// Material 1 coefficients (intercept and stress slopes) iid U(-1/30, 0);
/// material k adds its own iid U(-1/30, 0) offsets. Material 1 is best.
SyntheticTruth gen_truth(const StudyConfig& config, std::uint64_t rep_seed);

/// y* = x' beta + sigma G; failure when y* <= log tau, censored otherwise.
Observation simulate_observation(const SyntheticTruth& truth, const DesignPoint& dp, Rng& rng);

struct PriorFit {
  PosteriorState belief;
  std::vector<Observation> data;
};

/// prior_points_per_material runs per material, stresses cycled over the lab
/// grid, absorbed into N(0, prior_var * I). The returned belief has n = 0.
PriorFit fit_prior(const StudyConfig& config, const TruthSimulator& truth, Rng& rng);
PriorFit fit_prior(const StudyConfig& config, const SyntheticTruth& truth, Rng& rng);

struct StepRecord {
  std::size_t chosen_index = 0;        // declared best material after this step
  GridCell design;                     // run performed at this step
  bool censored = false;
  std::optional<double> ei_value;      // SeqEI only
  bool fell_back = false;              // exact refit failed, approx used
};

struct DecisionTrace {
  std::size_t truth_best = 0;
  std::size_t prior_best = 0;          // decision before any sequential run
  bool prior_fell_back = false;
  std::vector<StepRecord> steps;       // one per sequential step
  std::size_t prior_observations = 0;
  std::size_t prior_censored = 0;

  /// Decision after step n, n = 0 being the prior decision.
  std::size_t decision(std::size_t n) const { return n == 0 ? prior_best : steps[n - 1].chosen_index; }
  std::size_t censored_count() const;
};

/// Seeds derived from (study seed, replication, stream). Tracks of the same
/// policy share streams so their design sequences coincide.
std::uint64_t truth_seed(std::uint64_t seed, std::size_t rep);
std::uint64_t prior_seed(std::uint64_t seed, std::size_t rep);
std::uint64_t loop_seed(std::uint64_t seed, std::size_t rep, PolicyKind policy);

DecisionTrace run_replication(const StudyConfig& config, const StudyMethod& method,
                              std::size_t rep_index);

/// Replication against an arbitrary simulator and candidate set.
DecisionTrace run_replication(const StudyConfig& config, const StudyMethod& method,
                              std::size_t rep_index, const TruthSimulator& truth,
                              const CandidateSet& cands);

/// PCS_n = fraction of traces whose decision after step n is the truth.
std::vector<double> estimate_pcs(const std::vector<DecisionTrace>& traces, std::size_t truth_best);
std::vector<double> estimate_pcs(const std::vector<DecisionTrace>& traces);

struct MethodResult {
  StudyMethod method;
  std::vector<double> pcs;
  std::vector<double> stderr_;
  std::vector<DecisionTrace> traces;
  std::size_t observations = 0;   // prior + sequential
  std::size_t censored = 0;

  double censoring_rate() const {
    return observations == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(observations);
  }
};

struct StudyResult {
  StudyConfig config;
  std::vector<MethodResult> methods;
  double wall_seconds = 0.0;

  const MethodResult* find(const StudyMethod& m) const;
};

/// Runs every method x replication cell on up to `threads` workers.
/// Results do not depend on the thread count.
StudyResult run_study(const StudyConfig& config, unsigned threads = 1);

/// Writes pcs.csv, traces.csv and meta.csv into `dir` (created if needed).
void write_study_outputs(const StudyResult& result, const std::filesystem::path& dir);

}  // namespace altplan
