#include "altplan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include "altplan/acquisition.hpp"
#include "altplan/errors.hpp"
#include "altplan/update.hpp"

namespace altplan {

namespace {

constexpr double kCoefficientLow = -1.0 / 30.0;
constexpr double kSignalLevel = 0.03;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_hash(std::size_t rep, std::uint64_t stream) {
  return splitmix64(splitmix64(static_cast<std::uint64_t>(rep)) ^ splitmix64(~stream));
}

constexpr std::uint64_t kTruthStream = 0x7472757468ULL;  // "truth"
constexpr std::uint64_t kPriorStream = 0x7072696f72ULL;  // "prior"
constexpr std::uint64_t kLoopStream = 0x6c6f6f70ULL;     // "loop"

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t truth_seed(std::uint64_t seed, std::size_t rep) {
  return seed ^ stream_hash(rep, kTruthStream);
}

std::uint64_t prior_seed(std::uint64_t seed, std::size_t rep) {
  return seed ^ stream_hash(rep, kPriorStream);
}

std::uint64_t loop_seed(std::uint64_t seed, std::size_t rep, PolicyKind policy) {
  return seed ^ stream_hash(rep, kLoopStream + static_cast<std::uint64_t>(policy));
}

std::vector<StudyMethod> all_methods() {
  std::vector<StudyMethod> out;
  for (PolicyKind p : {PolicyKind::FactorialRandomized, PolicyKind::SeqDOptimal, PolicyKind::SeqEI}) {
    for (DecisionTrack t : {DecisionTrack::Approx, DecisionTrack::ExactRefit}) out.push_back({p, t});
  }
  return out;
}

double signal_to_std(double noise_sd) { return kSignalLevel / noise_sd; }

// ---------------------------------------------------------------------------
// Configuration

StudyConfig StudyConfig::defaults() {
  StudyConfig c;
  c.stress_levels.assign(static_cast<std::size_t>(c.d), {0.5, 1.0});
  c.target_stress = Vector::Constant(c.d, 0.1);
  c.methods = all_methods();
  return c;
}

void StudyConfig::validate() const {
  std::vector<ConfigError::Field> errs;
  if (K < 2) errs.push_back({"K", "must be at least 2"});
  if (d < 1) errs.push_back({"d", "must be at least 1"});
  if (stress_levels.size() != static_cast<std::size_t>(std::max(d, 0))) {
    errs.push_back({"stress_levels", "needs one level list per stress factor (d)"});
  }
  for (std::size_t i = 0; i < stress_levels.size(); ++i) {
    const auto& lv = stress_levels[i];
    const std::string name = "stress_levels[" + std::to_string(i) + "]";
    if (lv.empty()) errs.push_back({name, "must list at least one level"});
    for (std::size_t a = 0; a < lv.size(); ++a) {
      if (!std::isfinite(lv[a])) errs.push_back({name, "levels must be finite"});
      for (std::size_t b = 0; b < a; ++b) {
        if (lv[a] == lv[b]) errs.push_back({name, "levels must be distinct"});
      }
    }
  }
  if (target_stress.size() != d) errs.push_back({"target_stress", "length must equal d"});
  if (!target_stress.allFinite()) errs.push_back({"target_stress", "entries must be finite"});
  if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) errs.push_back({"noise_sd", "must be positive"});
  if (!(tau > 0.0) || !std::isfinite(tau)) errs.push_back({"tau", "must be positive"});
  if (n_steps < 1) errs.push_back({"n_steps", "must be at least 1"});
  if (replications < 1) errs.push_back({"replications", "must be at least 1"});
  if (methods.empty()) errs.push_back({"methods", "must list at least one method"});
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (methods[i] == methods[j]) errs.push_back({"methods", "duplicate entry"});
    }
  }
  if (!(prior_var > 0.0) || !std::isfinite(prior_var)) errs.push_back({"prior_var", "must be positive"});
  if (refit_every < 1) errs.push_back({"refit_every", "must be at least 1"});
  if (!errs.empty()) throw ConfigError(std::move(errs));
}

CandidateSet StudyConfig::candidates() const {
  CandidateSet c;
  for (int k = 0; k < K; ++k) {
    Vector z = Vector::Zero(K - 1);
    if (k > 0) z(k - 1) = 1.0;
    c.materials.push_back(std::move(z));
  }
  // Full factorial over the per-factor levels, last factor varying fastest.
  std::vector<std::size_t> idx(stress_levels.size(), 0);
  for (;;) {
    Vector v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t f = 0; f < idx.size(); ++f) v(static_cast<Eigen::Index>(f)) = stress_levels[f][idx[f]];
    c.stresses.push_back(std::move(v));
    std::size_t f = idx.size();
    while (f > 0 && ++idx[f - 1] == stress_levels[f - 1].size()) idx[--f] = 0;
    if (f == 0) break;
  }
  c.target_stress = target_stress;
  return c;
}

StudyConfig StudyConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be an object");
  static const char* known[] = {"K", "d", "stress_levels", "target_stress", "noise_sd", "tau",
                                "n_steps", "replications", "prior_points_per_material",
                                "methods", "seed", "prior_var", "refit_every"};
  std::vector<ConfigError::Field> errs;
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) errs.push_back({key, "unknown field"});
  }

  StudyConfig c = defaults();
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const std::exception&) {
      errs.push_back({key, "has the wrong type"});
    }
  };
  get("K", c.K);
  get("d", c.d);
  get("noise_sd", c.noise_sd);
  get("tau", c.tau);
  get("n_steps", c.n_steps);
  get("replications", c.replications);
  get("prior_points_per_material", c.prior_points_per_material);
  get("seed", c.seed);
  get("prior_var", c.prior_var);
  get("refit_every", c.refit_every);

  const std::size_t d = c.d > 0 ? static_cast<std::size_t>(c.d) : 0;
  if (j.contains("stress_levels")) {
    const auto& s = j.at("stress_levels");
    try {
      if (s.is_array() && !s.empty() && s.front().is_number()) {
        c.stress_levels.assign(d, s.get<std::vector<double>>());
      } else {
        c.stress_levels = s.get<std::vector<std::vector<double>>>();
      }
    } catch (const std::exception&) {
      errs.push_back({"stress_levels", "must be a list of numbers or a list of per-factor lists"});
    }
  } else {
    c.stress_levels.assign(d, {0.5, 1.0});
  }
  if (j.contains("target_stress")) {
    const auto& t = j.at("target_stress");
    try {
      c.target_stress = t.is_number() ? Vector::Constant(static_cast<Eigen::Index>(d), t.get<double>())
                                      : vector_from_json(t);
    } catch (const std::exception&) {
      errs.push_back({"target_stress", "must be a number or a list of numbers"});
    }
  } else {
    c.target_stress = Vector::Constant(static_cast<Eigen::Index>(d), 0.1);
  }
  if (j.contains("methods")) {
    c.methods.clear();
    const auto& m = j.at("methods");
    if (!m.is_array()) {
      errs.push_back({"methods", "must be a list of {policy, track} objects"});
    } else {
      for (const auto& item : m) {
        const auto policy = item.is_object() && item.contains("policy") && item["policy"].is_string()
                                ? parse_policy(item["policy"].get<std::string>())
                                : std::nullopt;
        const auto track = item.is_object() && item.contains("track") && item["track"].is_string()
                               ? parse_track(item["track"].get<std::string>())
                               : std::nullopt;
        if (!policy) errs.push_back({"methods", "policy must be one of Design, SeqD, SeqEI"});
        if (!track) errs.push_back({"methods", "track must be approx or exact"});
        if (policy && track) c.methods.push_back({*policy, *track});
      }
    }
  }
  // Fields that failed to parse kept their defaults, so validation still applies.
  try {
    c.validate();
  } catch (const ConfigError& e) {
    errs.insert(errs.end(), e.fields().begin(), e.fields().end());
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));
  return c;
}

nlohmann::json StudyConfig::to_json() const {
  nlohmann::json methods_json = nlohmann::json::array();
  for (const auto& m : methods) {
    methods_json.push_back({{"policy", std::string(to_string(m.policy))},
                            {"track", std::string(to_string(m.track))}});
  }
  return {{"K", K},
          {"d", d},
          {"stress_levels", stress_levels},
          {"target_stress", vector_to_json(target_stress)},
          {"noise_sd", noise_sd},
          {"tau", tau},
          {"n_steps", n_steps},
          {"replications", replications},
          {"prior_points_per_material", prior_points_per_material},
          {"methods", methods_json},
          {"seed", seed},
          {"prior_var", prior_var},
          {"refit_every", refit_every}};
}

// ---------------------------------------------------------------------------
// Truth and simulation

SyntheticTruth gen_truth(const StudyConfig& config, std::uint64_t rep_seed) {
  const CandidateSet cands = config.candidates();
  const Eigen::Index d = config.d;
  const Eigen::Index p = config.K - 1;
  Rng rng(rep_seed);
  std::uniform_real_distribution<double> coef(kCoefficientLow, 0.0);

  SyntheticTruth t;
  t.noise_sd = config.noise_sd;
  t.log_tau = std::log(config.tau);
  t.beta = Vector::Zero(feature_length(p, d));

  for (Eigen::Index i = 0; i <= d; ++i) t.beta(i) = coef(rng);
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (Eigen::Index k = 0; k < p; ++k) {
      t.beta(1 + d + k) = coef(rng);
      for (Eigen::Index j = 0; j < d; ++j) t.beta(1 + d + p + k * d + j) = coef(rng);
    }
    t.best_index = best_by_coefficients(t.beta, cands);
    if (t.best_index == 0) return t;
  }
  throw std::runtime_error("gen_truth: material 1 is not the best at the target stress");
}

Observation simulate_observation(const SyntheticTruth& truth, const DesignPoint& dp, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const double y = feature_map(dp).dot(truth.beta) + truth.noise_sd * noise(rng);
  Observation obs;
  obs.design = dp;
  obs.log_tau = truth.log_tau;
  obs.failed = y <= truth.log_tau;
  obs.y = obs.failed ? y : 0.0;
  return obs;
}

Observation LinearLogNormalTruth::simulate(const DesignPoint& dp, Rng& rng) const {
  return simulate_observation(truth_, dp, rng);
}

PriorFit fit_prior(const StudyConfig& config, const TruthSimulator& truth, Rng& rng) {
  const CandidateSet cands = config.candidates();
  PriorFit out;
  out.belief = PosteriorState::diffuse(cands.feature_dim(), config.noise_sd * config.noise_sd,
                                       config.prior_var);
  for (std::size_t i = 0; i < config.prior_points_per_material; ++i) {
    for (std::size_t k = 0; k < cands.num_materials(); ++k) {
      const Observation obs = truth.simulate(cands.design(k, i % cands.num_stresses()), rng);
      out.belief = absorb(out.belief, obs);
      out.data.push_back(obs);
    }
  }
  out.belief.n = 0;
  return out;
}

PriorFit fit_prior(const StudyConfig& config, const SyntheticTruth& truth, Rng& rng) {
  return fit_prior(config, LinearLogNormalTruth(truth), rng);
}

// ---------------------------------------------------------------------------
// Replications

std::size_t DecisionTrace::censored_count() const {
  std::size_t c = 0;
  for (const auto& s : steps) c += s.censored ? 1 : 0;
  return c;
}

DecisionTrace run_replication(const StudyConfig& config, const StudyMethod& method,
                              std::size_t rep_index, const TruthSimulator& truth,
                              const CandidateSet& cands) {
  const double noise_var = config.noise_sd * config.noise_sd;
  Rng prior_rng(prior_seed(config.seed, rep_index));
  PriorFit prior = fit_prior(config, truth, prior_rng);

  DecisionTrace trace;
  trace.truth_best = truth.best_index();
  trace.prior_observations = prior.data.size();
  for (const auto& o : prior.data) trace.prior_censored += o.failed ? 0 : 1;

  PosteriorState belief = std::move(prior.belief);
  std::vector<Observation> data = std::move(prior.data);

  std::optional<Vector> warm;
  Decision last = decide_best(method.track, belief, data, cands, noise_var, warm);
  if (last.beta_hat) warm = last.beta_hat;
  trace.prior_best = last.best;
  trace.prior_fell_back = last.fell_back;

  const std::uint64_t lseed = loop_seed(config.seed, rep_index, method.policy);
  PolicyState policy(method.policy, cands, std::max<std::size_t>(config.n_steps, 1), lseed);
  Rng rng(lseed);

  trace.steps.reserve(config.n_steps);
  for (std::size_t step = 0; step < config.n_steps; ++step) {
    const DesignChoice choice = policy.next_choice(belief, cands);
    const Observation obs = truth.simulate(cands.design(choice.cell.z_index, choice.cell.v_index), rng);
    belief = absorb(belief, obs);
    data.push_back(obs);

    const bool refit = method.track == DecisionTrack::Approx || (step + 1) % config.refit_every == 0 ||
                       step + 1 == config.n_steps;
    if (refit) {
      last = decide_best(method.track, belief, data, cands, noise_var, warm);
      if (last.beta_hat) warm = last.beta_hat;
    }

    StepRecord rec;
    rec.chosen_index = last.best;
    rec.design = choice.cell;
    rec.censored = !obs.failed;
    if (method.policy == PolicyKind::SeqEI) rec.ei_value = choice.score;
    rec.fell_back = last.fell_back;
    trace.steps.push_back(rec);
  }
  return trace;
}

DecisionTrace run_replication(const StudyConfig& config, const StudyMethod& method,
                              std::size_t rep_index) {
  const LinearLogNormalTruth truth(gen_truth(config, truth_seed(config.seed, rep_index)));
  return run_replication(config, method, rep_index, truth, config.candidates());
}

std::vector<double> estimate_pcs(const std::vector<DecisionTrace>& traces, std::size_t truth_best) {
  if (traces.empty()) throw std::invalid_argument("estimate_pcs: no traces");
  const std::size_t len = traces.front().steps.size();
  std::vector<double> pcs(len + 1, 0.0);
  for (const auto& t : traces) {
    if (t.steps.size() != len) throw std::invalid_argument("estimate_pcs: traces differ in length");
    for (std::size_t n = 0; n <= len; ++n) pcs[n] += t.decision(n) == truth_best ? 1.0 : 0.0;
  }
  for (double& p : pcs) p /= static_cast<double>(traces.size());
  return pcs;
}

std::vector<double> estimate_pcs(const std::vector<DecisionTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("estimate_pcs: no traces");
  const std::size_t len = traces.front().steps.size();
  std::vector<double> pcs(len + 1, 0.0);
  for (const auto& t : traces) {
    if (t.steps.size() != len) throw std::invalid_argument("estimate_pcs: traces differ in length");
    for (std::size_t n = 0; n <= len; ++n) pcs[n] += t.decision(n) == t.truth_best ? 1.0 : 0.0;
  }
  for (double& p : pcs) p /= static_cast<double>(traces.size());
  return pcs;
}

const MethodResult* StudyResult::find(const StudyMethod& m) const {
  for (const auto& r : methods) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

StudyResult run_study(const StudyConfig& config, unsigned threads) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const CandidateSet cands = config.candidates();

  std::vector<LinearLogNormalTruth> truths;
  truths.reserve(config.replications);
  for (std::size_t r = 0; r < config.replications; ++r) {
    truths.emplace_back(gen_truth(config, truth_seed(config.seed, r)));
  }

  StudyResult result;
  result.config = config;
  result.methods.resize(config.methods.size());
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    result.methods[m].method = config.methods[m];
    result.methods[m].traces.resize(config.replications);
  }

  const std::size_t cells = config.methods.size() * config.replications;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t cell = next++; cell < cells; cell = next++) {
      const std::size_t m = cell / config.replications;
      const std::size_t r = cell % config.replications;
      try {
        result.methods[m].traces[r] = run_replication(config, config.methods[m], r, truths[r], cands);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cells)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  const double reps = static_cast<double>(config.replications);
  for (auto& mr : result.methods) {
    mr.pcs = estimate_pcs(mr.traces);
    mr.stderr_.clear();
    for (double p : mr.pcs) mr.stderr_.push_back(std::sqrt(p * (1.0 - p) / reps));
    for (const auto& t : mr.traces) {
      mr.observations += t.prior_observations + t.steps.size();
      mr.censored += t.prior_censored + t.censored_count();
    }
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_study_outputs(const StudyResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(std::string("cannot write ") + (dir / name).string());
    return out;
  };

  {
    std::ofstream out = open("pcs.csv");
    out << "method,track,step,pcs,stderr\n";
    for (const auto& mr : result.methods) {
      for (std::size_t n = 0; n < mr.pcs.size(); ++n) {
        out << to_string(mr.method.policy) << ',' << to_string(mr.method.track) << ',' << n << ','
            << fmt_double(mr.pcs[n]) << ',' << fmt_double(mr.stderr_[n]) << '\n';
      }
    }
  }
  {
    std::ofstream out = open("traces.csv");
    out << "method,track,replication,step,chosen_index,censored,ei_value\n";
    for (const auto& mr : result.methods) {
      const std::string prefix =
          std::string(to_string(mr.method.policy)) + ',' + std::string(to_string(mr.method.track)) + ',';
      for (std::size_t r = 0; r < mr.traces.size(); ++r) {
        const DecisionTrace& t = mr.traces[r];
        out << prefix << r << ",0," << t.prior_best << ",,\n";
        for (std::size_t s = 0; s < t.steps.size(); ++s) {
          const StepRecord& rec = t.steps[s];
          out << prefix << r << ',' << s + 1 << ',' << rec.chosen_index << ',' << (rec.censored ? 1 : 0)
              << ',' << (rec.ei_value ? fmt_double(*rec.ei_value) : std::string()) << '\n';
        }
      }
    }
  }
  {
    std::ofstream out = open("meta.csv");
    const StudyConfig& c = result.config;
    out << "key,value\n";
    out << "seed," << c.seed << '\n';
    out << "K," << c.K << '\n';
    out << "d," << c.d << '\n';
    out << "noise_sd," << fmt_double(c.noise_sd) << '\n';
    out << "signal_to_std," << fmt_double(signal_to_std(c.noise_sd)) << '\n';
    out << "tau," << fmt_double(c.tau) << '\n';
    out << "n_steps," << c.n_steps << '\n';
    out << "replications," << c.replications << '\n';
    out << "prior_points_per_material," << c.prior_points_per_material << '\n';
    out << "prior_var," << fmt_double(c.prior_var) << '\n';
    out << "refit_every," << c.refit_every << '\n';
    out << "material_encoding,dummy K-1 (level 1 baseline)\n";
    for (const auto& mr : result.methods) {
      const std::string name =
          std::string(to_string(mr.method.policy)) + '_' + std::string(to_string(mr.method.track));
      out << "censoring_rate_" << name << ',' << fmt_double(mr.censoring_rate()) << '\n';
      out << "observations_" << name << ',' << mr.observations << '\n';
    }
    out << "wall_seconds," << fmt_double(result.wall_seconds) << '\n';
  }
}

}  // namespace altplan
