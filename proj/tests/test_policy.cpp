#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"

#include "altplan/acquisition.hpp"
#include "altplan/errors.hpp"
#include "altplan/policy.hpp"
#include "oracles.hpp"

using namespace altplan;

namespace {

CandidateSet grid(int K, int M) {
  CandidateSet c;
  for (int k = 0; k < K; ++k) c.materials.push_back(Vector::Constant(1, k));
  for (int m = 0; m < M; ++m) c.stresses.push_back(Vector::Constant(1, 0.5 + 0.25 * m));
  c.target_stress = Vector::Constant(1, 0.1);
  return c;
}

std::map<GridCell, int> counts(const std::vector<GridCell>& s) {
  std::map<GridCell, int> out;
  for (const auto& c : s) ++out[c];
  return out;
}

}  // namespace

TEST_CASE("labels round trip") {
  for (auto k : {PolicyKind::FactorialRandomized, PolicyKind::SeqDOptimal, PolicyKind::SeqEI})
    CHECK(parse_policy(to_string(k)) == k);
  for (auto t : {DecisionTrack::Approx, DecisionTrack::ExactRefit}) CHECK(parse_track(to_string(t)) == t);
  CHECK_FALSE(parse_policy("random").has_value());
}

TEST_CASE("factorial schedule replicates the grid") {
  const CandidateSet c = grid(2, 4);
  const auto exact = counts(build_factorial_schedule(c, 8, 1));
  CHECK(exact.size() == 8);
  for (const auto& [cell, n] : exact) CHECK(n == 1);

  const auto ten = counts(build_factorial_schedule(c, 10, 1));
  int twice = 0, once = 0;
  for (const auto& [cell, n] : ten) (n == 2 ? twice : once)++;
  CHECK(twice == 2);
  CHECK(once == 6);

  for (std::size_t n = 1; n <= 40; ++n) {
    const auto cnt = counts(build_factorial_schedule(grid(3, 5), n, n));
    for (const auto& [cell, k] : cnt) {
      CHECK(k >= static_cast<int>(n / 15));
      CHECK(k <= static_cast<int>((n + 14) / 15));
    }
  }
}

TEST_CASE("factorial schedule is reproducible and seed dependent") {
  const CandidateSet c = grid(2, 4);
  CHECK(build_factorial_schedule(c, 8, 5) == build_factorial_schedule(c, 8, 5));
  int differ = 0;
  for (std::uint64_t s = 0; s < 20; ++s)
    differ += build_factorial_schedule(c, 8, s) != build_factorial_schedule(c, 8, s + 100);
  CHECK(differ >= 19);
}

TEST_CASE("factorial policy exhausts its schedule") {
  const CandidateSet c = grid(2, 2);
  PolicyState p(PolicyKind::FactorialRandomized, c, 4, 3);
  const PosteriorState b = PosteriorState::diffuse(c.feature_dim(), 1.0);
  for (int i = 0; i < 4; ++i) CHECK(p.next_choice(b, c).cell == (*p.schedule())[i]);
  CHECK_THROWS_AS(p.next_choice(b, c), ScheduleExhausted);
}

TEST_CASE("SeqD picks the largest quadratic form") {
  const CandidateSet c = grid(3, 4);
  PosteriorState b = PosteriorState::diffuse(c.feature_dim(), 1.0, 1.0);
  const DesignChoice d = seq_d_optimal(b, c);
  CHECK(d.cell == GridCell{2, 3});  // largest |x| under Sigma = I

  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    b.sigma_mat = oracle::random_spd(static_cast<int>(c.feature_dim()), rng);
    const DesignChoice pick = seq_d_optimal(b, c);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t m = 0; m < 4; ++m)
        CHECK(oracle::quad_form(b.sigma_mat, feature_map(c.design(j, m))) <= pick.score + 1e-12);
  }
}

TEST_CASE("SeqD determinant identity") {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 10; ++rep) {
    PosteriorState b;
    b.sigma_mat = oracle::random_spd(5, rng);
    b.theta = Vector::Zero(5);
    b.noise_var = 0.3;
    const Vector x = oracle::random_vector(5, rng);
    const PosteriorState next = conjugate_update(b, x, 0.0);
    const double lhs = std::log(next.sigma_mat.inverse().determinant()) - std::log(b.sigma_mat.inverse().determinant());
    CHECK(std::abs(lhs - std::log1p(x.dot(b.sigma_mat * x) / b.noise_var)) < 1e-10);
  }
}

TEST_CASE("SeqEI policy delegates to select_next") {
  const CandidateSet c = grid(3, 3);
  std::mt19937_64 rng(2);
  PosteriorState b;
  b.theta = oracle::random_vector(static_cast<int>(c.feature_dim()), rng, 0.2);
  b.sigma_mat = oracle::random_spd(static_cast<int>(c.feature_dim()), rng) * 0.1;
  b.noise_var = 0.01;
  auto p = PolicyState::sequential(PolicyKind::SeqEI);
  const auto choice = p.next_choice(b, c);
  const EiScore s = select_next(b, c);
  CHECK(choice.cell == GridCell{s.z_index, s.v_index});
  CHECK(choice.score == s.value);
  CHECK_THROWS(PolicyState::sequential(PolicyKind::FactorialRandomized));
}

TEST_CASE("decide_best tracks") {
  CandidateSet c = grid(2, 3);
  PosteriorState b = PosteriorState::diffuse(c.feature_dim(), 0.01);
  CHECK(decide_best(DecisionTrack::Approx, b, {}, c, 0.01).best == 0);

  // All censored data: the refit cannot be identified and the approx belief is used.
  std::vector<Observation> censored;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t m = 0; m < 3; ++m) censored.push_back({c.design(j, m), 0.0, false, 0.0});
  const Decision fb = decide_best(DecisionTrack::ExactRefit, b, censored, c, 0.01);
  CHECK(fb.fell_back);
  CHECK_FALSE(fb.beta_hat.has_value());

  // Fully observed orthogonal data: the decision follows least squares.
  const Vector beta{{0.1, -0.2, 0.05, 0.3}};
  std::vector<Observation> data;
  Matrix X(12, 4);
  Vector y(12);
  int r = 0;
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t m = 0; m < 3; ++m, ++r) {
        const Vector x = feature_map(c.design(j, m));
        X.row(r) = x.transpose();
        y(r) = x.dot(beta) + (rep == 0 ? 0.01 : -0.01) * (m + 1);
        data.push_back({c.design(j, m), 10.0, true, y(r)});
      }
  const Vector ols = X.colPivHouseholderQr().solve(y);
  const Decision d = decide_best(DecisionTrack::ExactRefit, b, data, c, 0.01);
  CHECK_FALSE(d.fell_back);
  REQUIRE(d.beta_hat.has_value());
  CHECK((*d.beta_hat - ols).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(d.best == best_by_coefficients(ols, c));
}
