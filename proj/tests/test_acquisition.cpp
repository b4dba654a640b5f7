#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "altplan/acquisition.hpp"
#include "altplan/update.hpp"
#include "oracles.hpp"

using namespace altplan;
using doctest::Approx;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// K materials as K-1 dummies, two stress factors on {0.5, 1}.
CandidateSet dummy_set(int K) {
  CandidateSet c;
  for (int k = 0; k < K; ++k) {
    Vector z = Vector::Zero(std::max(K - 1, 1));
    if (k > 0) z(k - 1) = 1.0;
    c.materials.push_back(z);
  }
  for (double a : {0.5, 1.0})
    for (double b : {0.5, 1.0}) c.stresses.push_back(vec({a, b}));
  c.target_stress = vec({0.1, 0.1});
  return c;
}

PosteriorState random_state(const CandidateSet& c, std::mt19937_64& rng, double noise_var) {
  PosteriorState s;
  s.theta = oracle::random_vector(static_cast<int>(c.feature_dim()), rng, 0.3);
  s.sigma_mat = oracle::random_spd(static_cast<int>(c.feature_dim()), rng) * 0.2;
  s.noise_var = noise_var;
  return s;
}

std::vector<KgLine> make_lines(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<KgLine> out;
  for (std::size_t k = 0; k < a.size(); ++k) out.push_back({a[k], b[k], k});
  return out;
}

}  // namespace

TEST_CASE("predictive_params") {
  std::mt19937_64 rng(1);
  const CandidateSet c = dummy_set(3);
  PosteriorState s = random_state(c, rng, 0.04);
  const Vector x = feature_map(c.design(1, 2));
  const auto p = predictive_params(s, x);
  double mean = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) mean += x(i) * s.theta(i);
  CHECK(std::abs(p.mean - mean) < 1e-12);
  CHECK(std::abs(p.var - (0.04 + oracle::quad_form(s.sigma_mat, x))) < 1e-12);

  s.sigma_mat.setZero();
  CHECK(predictive_params(s, x).var == 0.04);
  s.theta.setZero();
  CHECK(predictive_params(s, x).mean == 0.0);
}

TEST_CASE("kg_lines slopes match the naive formula") {
  std::mt19937_64 rng(2);
  const CandidateSet c = dummy_set(4);
  const PosteriorState s = random_state(c, rng, 0.01);
  const DesignPoint probe = c.design(2, 3);
  const Vector x = feature_map(probe);
  const auto lines = kg_lines(s, probe, c);
  const double sd = std::sqrt(s.noise_var + oracle::quad_form(s.sigma_mat, x));
  for (std::size_t k = 0; k < c.num_materials(); ++k) {
    const Vector t = feature_map(c.target(k));
    double cross = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i)
      for (Eigen::Index j = 0; j < x.size(); ++j) cross += t(i) * s.sigma_mat(i, j) * x(j);
    CHECK(std::abs(lines[k].slope - cross / sd) < 1e-12);
    CHECK(std::abs(lines[k].intercept - t.dot(s.theta)) < 1e-12);
    CHECK(lines[k].material_index == k);
  }
}

TEST_CASE("kg_lines degenerate cases") {
  const CandidateSet c = dummy_set(2);
  PosteriorState s = PosteriorState::diffuse(c.feature_dim(), 0.01, 1.0);
  s.sigma_mat.setZero();
  for (const auto& l : kg_lines(s, c.design(0, 0), c)) CHECK(l.slope == 0.0);

  // Probe at the target of material k with Sigma = I and no noise: slope_k = |x|.
  PosteriorState id = PosteriorState::diffuse(c.feature_dim(), 0.0, 1.0);
  CandidateSet at_target = c;
  at_target.stresses = {c.target_stress};
  const auto lines = kg_lines(id, at_target.design(1, 0), at_target);
  CHECK(lines[1].slope == Approx(feature_map(c.target(1)).norm()).epsilon(1e-14));
}

TEST_CASE("expected_max_gain closed cases") {
  CHECK(expected_max_gain(make_lines({0.0, 0.0}, {0.0, 1.0})) == Approx(0.3989422804014327).epsilon(1e-14));
  CHECK(expected_max_gain(make_lines({1.0}, {3.0})) == 0.0);
  CHECK(expected_max_gain(make_lines({1.0, 0.5, -2.0}, {0.7, 0.7, 0.7})) == 0.0);
  // Dominated line in the middle never reaches the envelope.
  const double two = expected_max_gain(make_lines({0.0, 0.0}, {-1.0, 1.0}));
  CHECK(expected_max_gain(make_lines({0.0, -5.0, 0.0}, {-1.0, 0.0, 1.0})) == Approx(two).epsilon(1e-14));
  // Duplicate slopes keep the larger intercept.
  CHECK(expected_max_gain(make_lines({0.0, -1.0, 0.0}, {1.0, 1.0, 0.0})) ==
        Approx(expected_max_gain(make_lines({0.0, 0.0}, {1.0, 0.0}))).epsilon(1e-14));
}

TEST_CASE("expected_max_gain matches Monte Carlo") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 10; ++rep) {
    const int K = 2 + rep % 5;
    std::vector<double> a(K), b(K);
    for (int k = 0; k < K; ++k) a[k] = 0.5 * g(rng), b[k] = g(rng);
    const auto mc = oracle::mc_max_gain(a, b, 200000, rng);
    CHECK(std::abs(expected_max_gain(make_lines(a, b)) - mc.mean) < 4 * mc.se);
  }
}

TEST_CASE("expected_max_gain is shift invariant and positively homogeneous in slopes") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 50; ++rep) {
    const int K = 2 + rep % 5;
    std::vector<double> a(K), b(K);
    for (int k = 0; k < K; ++k) a[k] = g(rng), b[k] = g(rng);
    const double base = expected_max_gain(make_lines(a, b));
    CHECK(base >= 0.0);
    std::vector<double> a2 = a, b2 = b;
    for (auto& v : a2) v += 3.7;
    CHECK(expected_max_gain(make_lines(a2, b)) == Approx(base).epsilon(1e-10));
    for (int k = 0; k < K; ++k) a2[k] = 2.5 * a[k], b2[k] = 2.5 * b[k];
    CHECK(expected_max_gain(make_lines(a2, b2)) == Approx(2.5 * base).epsilon(1e-10));
    // Input order does not matter.
    auto lines = make_lines(a, b);
    std::shuffle(lines.begin(), lines.end(), rng);
    CHECK(expected_max_gain(lines) == Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("ei_score matches a Monte Carlo of the one-step lookahead") {
  CandidateSet c = dummy_set(2);
  PosteriorState s = PosteriorState::diffuse(c.feature_dim(), 0.04, 1.0);
  s.sigma_mat = Matrix::Identity(c.feature_dim(), c.feature_dim()) * 0.05;
  s.sigma_mat(0, 3) = s.sigma_mat(3, 0) = 0.01;
  s.sigma_mat(3, 5) = s.sigma_mat(5, 3) = -0.015;
  s.theta(0) = 0.02;
  s.theta(3) = -0.01;
  const DesignPoint probe = c.design(1, 2);
  const Vector x = feature_map(probe);
  const auto pred = predictive_params(s, x);
  const Matrix T = c.target_features();
  const double now = (T * s.theta).maxCoeff();

  std::mt19937_64 rng(42);
  std::normal_distribution<double> g;
  const int n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = pred.mean + std::sqrt(pred.var) * g(rng);
    const Vector th = s.theta + (y - pred.mean) / pred.var * (s.sigma_mat * x);
    const double v = (T * th).maxCoeff() - now;
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(ei_score(s, probe, c) - mean) < 4 * se);

  // Same value through the sequential update itself for one draw.
  const PosteriorState after = conjugate_update(s, x, pred.mean + std::sqrt(pred.var) * 0.3);
  const auto lines = kg_lines(s, probe, c);
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(feature_map(c.target(k)).dot(after.theta) == Approx(lines[k].intercept + 0.3 * lines[k].slope));
}

TEST_CASE("ei_score degenerate beliefs") {
  CandidateSet c = dummy_set(3);
  PosteriorState s = PosteriorState::diffuse(c.feature_dim(), 0.01, 1.0);
  s.sigma_mat.setZero();
  for (const auto& e : ei_table(s, c)) CHECK(e.value == 0.0);

  CandidateSet one = c;
  one.materials = {Vector::Zero(2)};
  PosteriorState s1 = PosteriorState::diffuse(one.feature_dim(), 0.01, 1.0);
  for (const auto& e : ei_table(s1, one)) CHECK(e.value == 0.0);
  const EiScore pick = select_next(s1, one);
  CHECK(pick.z_index == 0);
  CHECK(pick.v_index == 0);
}

TEST_CASE("select_next is the exhaustive maximum with the lexicographic tie break") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const CandidateSet c = dummy_set(2 + rep % 3);
    const PosteriorState s = random_state(c, rng, 0.02);
    const EiScore pick = select_next(s, c);
    double best = -1.0;
    std::size_t bj = 0, bm = 0;
    for (std::size_t j = 0; j < c.num_materials(); ++j)
      for (std::size_t m = 0; m < c.num_stresses(); ++m) {
        const double v = ei_score(s, c.design(j, m), c);
        if (v > best) best = v, bj = j, bm = m;
      }
    CHECK(pick.value == best);
    CHECK(pick.z_index == bj);
    CHECK(pick.v_index == bm);

    // Reversing the stress list maps the pick to the same design.
    CandidateSet rev = c;
    std::reverse(rev.stresses.begin(), rev.stresses.end());
    const EiScore r = select_next(s, rev);
    CHECK(r.value == Approx(pick.value).epsilon(1e-12));
    CHECK(rev.stresses[r.v_index] == c.stresses[pick.v_index]);
  }
}

TEST_CASE("symmetric prior picks the stress with the larger slope") {
  CandidateSet c = dummy_set(2);
  PosteriorState s = PosteriorState::diffuse(c.feature_dim(), 0.01, 0.05);
  const auto table = ei_table(s, c);
  const auto best = std::max_element(table.begin(), table.end(),
                                     [](const EiScore& a, const EiScore& b) { return a.value < b.value; });
  double best_slope = 0.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto lines = kg_lines(s, c.design(table[i].z_index, table[i].v_index), c);
    const double spread = std::abs(lines[1].slope - lines[0].slope);
    if (spread > best_slope + 1e-15) best_slope = spread, arg = i;
  }
  CHECK(best->z_index == table[arg].z_index);
  CHECK(best->v_index == table[arg].v_index);
}

TEST_CASE("current_best") {
  CandidateSet c;
  c.materials = {Vector::Unit(2, 0), Vector::Unit(2, 1)};
  c.stresses = {vec({1.0})};
  c.target_stress = vec({0.1});
  PosteriorState s = PosteriorState::diffuse(c.feature_dim(), 1.0);
  CHECK(current_best(s, c) == 0);
  s.theta(3) = 0.5;  // z-block coordinate of material 2
  CHECK(current_best(s, c) == 1);

  std::mt19937_64 rng(7);
  const CandidateSet d = dummy_set(5);
  for (int i = 0; i < 20; ++i) {
    const Vector th = oracle::random_vector(static_cast<int>(d.feature_dim()), rng);
    std::size_t arg = 0;
    double best = -1e300;
    for (std::size_t k = 0; k < d.num_materials(); ++k) {
      const double m = feature_map(d.target(k)).dot(th);
      if (m > best) best = m, arg = k;
    }
    CHECK(best_by_coefficients(th, d) == arg);
  }
}

TEST_CASE("target_summary") {
  std::mt19937_64 rng(8);
  const CandidateSet c = dummy_set(3);
  const PosteriorState s = random_state(c, rng, 0.01);
  const auto rows = target_summary(s, c);
  REQUIRE(rows.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const Vector x = feature_map(c.target(k));
    CHECK(rows[k].mean == Approx(x.dot(s.theta)).epsilon(1e-14));
    CHECK(rows[k].sd == Approx(std::sqrt(oracle::quad_form(s.sigma_mat, x))).epsilon(1e-12));
  }
}
