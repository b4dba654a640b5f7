// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "altplan/acquisition.hpp"
#include "altplan/harness.hpp"
#include "altplan/numerics.hpp"
#include "altplan/update.hpp"
#include "oracles.hpp"

using namespace altplan;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void run(const char* name, double max_seconds, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = max_seconds <= 0 || secs < max_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s  %-34s %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
              in_time ? "" : ", over time limit");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Outcome truncated_moments() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(-10, 10), lv(-4, 4);
  double worst_mean = 0, worst_var = 0;
  for (int i = 0; i < 200; ++i) {
    const double alpha = -6.0 + 12.0 * i / 199.0;
    const double m = mu(rng), v = std::exp(lv(rng));
    const double lower = m + alpha * std::sqrt(v);
    const auto got = truncated_normal_moments(m, v, lower);
    const auto ref = oracle::truncated_moments(m, v, lower);
    worst_mean = std::max(worst_mean, std::abs(got.mean - ref.mean));
    worst_var = std::max(worst_var, std::abs(got.variance - ref.variance));
  }
  return {worst_mean < 1e-8 && worst_var < 1e-8,
          fmt("200 points, max |dmean| %.2e, max |dvar| %.2e (tol 1e-8)", worst_mean, worst_var)};
}

Outcome sequential_batch() {
  std::mt19937_64 rng(77);
  const int dim = 8, n = 500;
  PosteriorState s;
  s.theta = oracle::random_vector(dim, rng);
  s.sigma_mat = oracle::random_spd(dim, rng, 0.5);
  s.noise_var = 0.3;
  const PosteriorState prior = s;
  Matrix X(n, dim);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) = oracle::random_vector(dim, rng).transpose();
    y(i) = 2.0 * oracle::random_vector(1, rng)(0);
    s = conjugate_update(s, X.row(i).transpose(), y(i));
  }
  Vector theta;
  Matrix S;
  oracle::batch_posterior(prior.sigma_mat, prior.theta, X, y, prior.noise_var, theta, S);
  const double dt = (s.theta - theta).cwiseAbs().maxCoeff();
  const double dS = (s.sigma_mat - S).cwiseAbs().maxCoeff();
  return {dt < 1e-8 && dS < 1e-8, fmt("500 obs, max |dtheta| %.2e, max |dSigma| %.2e (tol 1e-8)", dt, dS)};
}

Outcome direct_woodbury() {
  std::mt19937_64 rng(5);
  const int dim = 8;
  PosteriorState d;
  d.theta = oracle::random_vector(dim, rng, 0.1);
  d.sigma_mat = oracle::random_spd(dim, rng, 0.5);
  d.noise_var = 0.04;
  PosteriorState w = d;
  std::bernoulli_distribution cens(0.35);
  std::normal_distribution<double> g(0.0, 0.5);
  int censored = 0;
  for (int i = 0; i < 100; ++i) {
    const Vector x = oracle::random_vector(dim, rng);
    const bool failed = !cens(rng);
    censored += failed ? 0 : 1;
    const double v = g(rng);
    d = absorb(d, x, failed, v, UpdateForm::Direct);
    w = absorb(w, x, failed, v, UpdateForm::Woodbury);
  }
  const double dt = (d.theta - w.theta).cwiseAbs().maxCoeff();
  const double dS = (d.sigma_mat - w.sigma_mat).cwiseAbs().maxCoeff();
  return {dt < 1e-6 && dS < 1e-6,
          fmt("100 steps (%g censored), max |dtheta| %.2e, max |dSigma| %.2e (tol 1e-6)", censored, dt, dS)};
}

Outcome ei_monte_carlo() {
  std::mt19937_64 rng(31337);
  std::normal_distribution<double> g;
  double worst = 0;
  int bad = 0;
  for (int set = 0; set < 50; ++set) {
    const int K = 2 + set % 5;
    std::vector<double> a(K), b(K);
    std::vector<KgLine> lines;
    for (int k = 0; k < K; ++k) {
      a[k] = 0.5 * g(rng);
      b[k] = g(rng);
      lines.push_back({a[k], b[k], static_cast<std::size_t>(k)});
    }
    const auto mc = oracle::mc_max_gain(a, b, 1000000, rng);
    const double z = std::abs(expected_max_gain(lines) - mc.mean) / mc.se;
    worst = std::max(worst, z);
    bad += z >= 4.0 ? 1 : 0;
  }
  return {bad == 0, fmt("50 sets, K in 2..6, 1e6 samples, worst %.2f SE (tol 4)", worst)};
}

struct ConsistencyRun {
  double median200;
  double median20000;
  double censored_fraction;
};

// Designs uniform on the K=2 study grid, log tau at the 70% response quantile.
ConsistencyRun consistency_run(double prior_var) {
  const StudyConfig cfg = StudyConfig::defaults();
  const CandidateSet cands = cfg.candidates();
  const double sd = cfg.noise_sd;
  std::vector<double> at200, at20000;
  double censored_frac = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticTruth base = gen_truth(cfg, 1000 + seed);
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> zj(0, cands.num_materials() - 1), vm(0, cands.num_stresses() - 1);
    std::normal_distribution<double> noise;

    std::vector<double> ys;
    for (int i = 0; i < 20000; ++i)
      ys.push_back(feature_map(cands.design(zj(rng), vm(rng))).dot(base.beta) + sd * noise(rng));
    std::nth_element(ys.begin(), ys.begin() + 14000, ys.end());
    SyntheticTruth truth = base;
    truth.log_tau = ys[14000];

    PosteriorState s = PosteriorState::diffuse(cands.feature_dim(), sd * sd, prior_var);
    int censored = 0;
    for (int n = 1; n <= 20000; ++n) {
      const Observation o = simulate_observation(truth, cands.design(zj(rng), vm(rng)), rng);
      censored += o.failed ? 0 : 1;
      s = absorb(s, o);
      if (n == 200) at200.push_back((s.theta - truth.beta).norm());
    }
    at20000.push_back((s.theta - truth.beta).norm());
    censored_frac += censored / 20000.0 / 20.0;
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  return {median(at200), median(at20000), censored_frac};
}

Outcome consistency() {
  const ConsistencyRun unit = consistency_run(1.0);
  const ConsistencyRun wide = consistency_run(100.0);
  return {unit.median20000 < 0.05 && unit.median20000 < unit.median200,
          fmt("prior N(0, I), censored %.1f%%, median |theta-beta| n=200: %.4f, n=20000: %.4f (need < 0.05, "
              "decreasing); ",
              100 * unit.censored_fraction, unit.median200, unit.median20000) +
              fmt("prior N(0, 100 I): %.4f -> %.4f", wide.median200, wide.median20000)};
}

Outcome censoring_band(double tau, double lo, double hi) {
  StudyConfig cfg = StudyConfig::defaults();
  cfg.tau = tau;
  cfg.replications = 112;  // 112 * (40 prior + 50 sequential) > 1e4 per method
  const StudyResult r = run_study(cfg, std::thread::hardware_concurrency());
  std::size_t obs = 0, cens = 0;
  double mn = 1, mx = 0;
  for (const auto& m : r.methods) {
    obs += m.observations;
    cens += m.censored;
    mn = std::min(mn, m.censoring_rate());
    mx = std::max(mx, m.censoring_rate());
  }
  const double rate = static_cast<double>(cens) / static_cast<double>(obs);
  const bool pass = mn >= lo && mx <= hi;
  return {pass, fmt("tau=%.1f: %.2f%% censored over %g obs (per method %.2f%%..", tau, 100 * rate,
                    static_cast<double>(obs), 100 * mn) +
                    fmt("%.2f%%), band [%.0f%%, %.0f%%]", 100 * mx, 100 * lo, 100 * hi)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run("truncated-normal moments", 5, truncated_moments);
  run("sequential equals batch", 5, sequential_batch);
  run("direct vs Woodbury", 10, direct_woodbury);
  run("EI closed form vs Monte Carlo", 60, ei_monte_carlo);
  run("consistency", 120, consistency);
  run("censoring rate tau=1.2", 0, [] { return censoring_band(1.2, 0.10, 0.20); });
  run("censoring rate tau=1.0", 0, [] { return censoring_band(1.0, 0.25, 0.35); });

  // Directional PCS at K=2, Signal/Std 0.3, tau 1.2.
  StudyConfig cfg = StudyConfig::defaults();
  StudyResult first, second;
  double study_seconds = 0;
  run("PCS study completes (6 methods)", 300, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    first = run_study(cfg, std::thread::hardware_concurrency());
    study_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool complete = first.methods.size() == 6;
    for (const auto& m : first.methods) complete = complete && m.traces.size() == 100 && m.pcs.size() == 51;
    return Outcome{complete, fmt("R=100, n=50, Signal/Std %.2f", signal_to_std(cfg.noise_sd))};
  });
  const auto* ei_exact = first.find({PolicyKind::SeqEI, DecisionTrack::ExactRefit});
  const auto* design_approx = first.find({PolicyKind::FactorialRandomized, DecisionTrack::Approx});
  run("PCS SeqEI-exact >= Design-approx - 0.02", 0, [&] {
    const double a = ei_exact->pcs.back(), b = design_approx->pcs.back();
    return Outcome{a >= b - 0.02, fmt("SeqEI-exact %.2f, Design-approx %.2f", a, b)};
  });
  run("PCS SeqEI-exact >= 0.8", 0, [&] {
    std::string all;
    for (const auto& m : first.methods)
      all += std::string(to_string(m.method.policy)) + "-" + std::string(to_string(m.method.track)) +
             fmt(" %.2f ", m.pcs.back());
    return Outcome{ei_exact->pcs.back() >= 0.8, fmt("SeqEI-exact %.2f; ", ei_exact->pcs.back()) + all};
  });

  run("determinism (pcs.csv, traces.csv)", 0, [&] {
    second = run_study(cfg, 1);
    const auto dir = std::filesystem::temp_directory_path() / "altplan_acceptance";
    std::filesystem::remove_all(dir);
    write_study_outputs(first, dir / "a");
    write_study_outputs(second, dir / "b");
    bool same = true;
    for (const char* f : {"pcs.csv", "traces.csv"}) {
      const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
      same = same && !a.empty() && a == b;
    }
    std::filesystem::remove_all(dir);
    return Outcome{same, "two full runs, different thread counts, byte-identical"};
  });

  std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "OK" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
