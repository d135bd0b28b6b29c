#include <cmath>

#include "doctest.h"
#include "steprl/common/rng.hpp"
#include "steprl/reward/reward.hpp"

using namespace steprl;
using reward::Aggregator;
using reward::Kind;

TEST_CASE("kl_per_token") {
  CHECK(reward::kl_per_token({-1.0, -0.5}, {-1.0, -0.5}) == std::vector<double>{0.0, 0.0});
  CHECK(reward::kl_per_token({-1.0}, {-2.0})[0] == 1.0);
  CHECK_THROWS_AS(reward::kl_per_token({-1.0}, {}), std::invalid_argument);
}

TEST_CASE("sampled KL estimate is nonnegative on a toy pair") {
  const double pi[3] = {0.6, 0.3, 0.1}, ref[3] = {0.2, 0.5, 0.3};
  double exact = 0.0;
  for (int i = 0; i < 3; ++i) exact += pi[i] * std::log(pi[i] / ref[i]);
  Rng rng(7);
  const int N = 20000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < N; ++i) {
    const double u = rng.uniform();
    const int x = u < 0.6 ? 0 : (u < 0.9 ? 1 : 2);
    const double k = reward::kl_per_token({std::log(pi[x])}, {std::log(ref[x])})[0];
    s += k;
    s2 += k * k;
  }
  const double mean = s / N, sd = std::sqrt((s2 / N - mean * mean) / N);
  CHECK(mean > 0.0);
  CHECK(std::abs(mean - exact) < 3 * sd);
}

TEST_CASE("aggregator examples") {
  CHECK(reward::aggregate(Aggregator::Avg, {0.2, 0.4, 0.6}) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(reward::aggregate(Aggregator::Prod, {0.5, 0.5, 0.5}) == 0.125);
  CHECK(reward::aggregate(Aggregator::Max, {0.1, 0.9}) == 0.9);
  CHECK(reward::aggregate(Aggregator::Min, {0.1, 0.9}) == 0.1);
  CHECK_THROWS_AS(reward::aggregate(Aggregator::Avg, {}), std::invalid_argument);
}

TEST_CASE("shape_rewards examples") {
  reward::RewardScheme s;
  auto r = reward::shape_rewards(s, 4, {0.1, -0.2, 0.0, 0.3}, 0.9, {});
  const std::vector<double> want{-0.02, 0.04, 0.0, 0.64};
  for (int i = 0; i < 4; ++i) CHECK(r.r[static_cast<std::size_t>(i)] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-14));
  CHECK(r.aggregate_raw == 0.9);
  CHECK(r.aggregate == 0.7);

  s.kind = Kind::PrmMax;
  rm::StepScores sc;
  sc.p = {0.3, 0.8};
  auto m = reward::shape_rewards(s, 5, std::vector<double>(5, 0.0), 0.1, sc);
  CHECK(m.r == std::vector<double>{0, 0, 0, 0, 0.7});
  CHECK(m.aggregate_raw == 0.8);

  CHECK_THROWS_AS(reward::shape_rewards(s, 3, {0.0, 0.0}, 0.5, sc), std::invalid_argument);
  s.beta = -1;
  CHECK_THROWS_AS(reward::shape_rewards(s, 2, {0.0, 0.0}, 0.5, sc), std::invalid_argument);
}

TEST_CASE("empty PRM scores use the configured fallback") {
  reward::RewardScheme s;
  s.kind = Kind::PrmMin;
  rm::StepScores empty;
  empty.empty = true;
  auto z = reward::shape_rewards(s, 2, {0.0, 0.0}, 0.6, empty);
  CHECK(z.used_fallback);
  CHECK(z.r.back() == 0.0);
  s.fallback = reward::EmptyFallback::OrmBackstop;
  auto b = reward::shape_rewards(s, 2, {0.0, 0.0}, 0.6, empty);
  CHECK(b.r.back() == 0.6);
}

TEST_CASE("non-terminal rewards are the same across schemes") {
  Rng rng(3);
  std::vector<double> kl(7);
  for (double& k : kl) k = rng.normal();
  rm::StepScores sc;
  sc.p = {0.2, 0.9, 0.4};
  std::vector<double> first;
  for (Kind k : {Kind::Orm, Kind::PrmAvg, Kind::PrmProd, Kind::PrmMax, Kind::PrmMin}) {
    reward::RewardScheme s;
    s.kind = k;
    auto r = reward::shape_rewards(s, 7, kl, 0.55, sc);
    std::vector<double> head(r.r.begin(), r.r.end() - 1);
    if (first.empty()) first = head;
    CHECK(head == first);
  }
}

TEST_CASE("zero beta and zero aggregate give zero rewards") {
  reward::RewardScheme s;
  s.beta = 0.0;
  s.kind = Kind::PrmProd;
  rm::StepScores sc;
  sc.p = {0.0, 0.7};
  auto r = reward::shape_rewards(s, 4, {1.0, 2.0, -3.0, 4.0}, 0.9, sc);
  CHECK(r.r == std::vector<double>(4, 0.0));
}

TEST_CASE("scheme names and config round trip") {
  for (Kind k : {Kind::Orm, Kind::PrmAvg, Kind::PrmProd, Kind::PrmMax, Kind::PrmMin})
    CHECK(reward::parse_kind(reward::kind_name(k)) == k);
  CHECK_THROWS(reward::parse_kind("prm_median"));
  reward::RewardScheme s;
  s.kind = Kind::PrmAvg;
  s.fallback = reward::EmptyFallback::OrmBackstop;
  auto back = reward::reward_scheme_from_json(reward::to_json(s));
  CHECK(back.kind == s.kind);
  CHECK(back.fallback == s.fallback);
  CHECK(back.beta == 0.2);
  CHECK_THROWS(reward::reward_scheme_from_json({{"reward_clip", 0.0}}));
}
