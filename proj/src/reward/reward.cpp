#include "steprl/reward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace steprl::reward {

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::Orm: return "orm";
    case Kind::PrmAvg: return "prm_avg";
    case Kind::PrmProd: return "prm_prod";
    case Kind::PrmMax: return "prm_max";
    case Kind::PrmMin: return "prm_min";
  }
  return "?";
}

Kind parse_kind(std::string_view s) {
  for (Kind k : {Kind::Orm, Kind::PrmAvg, Kind::PrmProd, Kind::PrmMax, Kind::PrmMin})
    if (kind_name(k) == s) return k;
  throw std::invalid_argument("unknown reward scheme '" + std::string(s) + "'");
}

bool uses_prm(Kind k) { return k != Kind::Orm; }

Aggregator aggregator_of(Kind k) {
  switch (k) {
    case Kind::PrmAvg: return Aggregator::Avg;
    case Kind::PrmProd: return Aggregator::Prod;
    case Kind::PrmMax: return Aggregator::Max;
    case Kind::PrmMin: return Aggregator::Min;
    case Kind::Orm: break;
  }
  throw std::invalid_argument("orm scheme has no aggregator");
}

std::string_view fallback_name(EmptyFallback f) { return f == EmptyFallback::Zero ? "zero" : "orm-backstop"; }

EmptyFallback parse_fallback(std::string_view s) {
  if (s == "zero") return EmptyFallback::Zero;
  if (s == "orm-backstop" || s == "orm_backstop") return EmptyFallback::OrmBackstop;
  throw std::invalid_argument("unknown empty-steps fallback '" + std::string(s) + "'");
}

void validate(const RewardScheme& s) {
  if (!(s.beta >= 0.0)) throw std::invalid_argument("reward scheme: beta must be >= 0");
  if (!(s.clip > 0.0)) throw std::invalid_argument("reward scheme: clip must be > 0");
}

nlohmann::json to_json(const RewardScheme& s) {
  return {{"reward_scheme", kind_name(s.kind)}, {"kl_coef", s.beta}, {"reward_clip", s.clip},
          {"empty_steps_fallback", fallback_name(s.fallback)}};
}

RewardScheme reward_scheme_from_json(const nlohmann::json& j) {
  RewardScheme s;
  s.kind = parse_kind(j.value("reward_scheme", std::string(kind_name(s.kind))));
  s.beta = j.value("kl_coef", s.beta);
  s.clip = j.value("reward_clip", s.clip);
  s.fallback = parse_fallback(j.value("empty_steps_fallback", std::string(fallback_name(s.fallback))));
  validate(s);
  return s;
}

std::vector<double> kl_per_token(const std::vector<double>& policy_logprobs, const std::vector<double>& reference_logprobs) {
  if (policy_logprobs.size() != reference_logprobs.size())
    throw std::invalid_argument("kl_per_token: " + std::to_string(policy_logprobs.size()) + " policy vs " +
                                std::to_string(reference_logprobs.size()) + " reference log-probs");
  std::vector<double> k(policy_logprobs.size());
  for (std::size_t t = 0; t < k.size(); ++t) k[t] = policy_logprobs[t] - reference_logprobs[t];
  return k;
}

double aggregate(Aggregator a, const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("aggregate: empty step scores");
  switch (a) {
    case Aggregator::Avg: return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    case Aggregator::Prod: return std::accumulate(scores.begin(), scores.end(), 1.0, std::multiplies<>());
    case Aggregator::Max: return *std::max_element(scores.begin(), scores.end());
    case Aggregator::Min: return *std::min_element(scores.begin(), scores.end());
  }
  throw std::invalid_argument("aggregate: unknown aggregator");
}

ShapedRewards shape_rewards(const RewardScheme& s, std::size_t n, const std::vector<double>& kl, double orm_score,
                            const rm::StepScores& prm) {
  validate(s);
  if (n == 0) throw std::invalid_argument("shape_rewards: empty response");
  if (kl.size() != n)
    throw std::invalid_argument("shape_rewards: kl has " + std::to_string(kl.size()) + " entries for n = " + std::to_string(n));
  ShapedRewards out;
  out.r.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.r[t] = -s.beta * kl[t];

  if (!uses_prm(s.kind)) {
    out.aggregate_raw = orm_score;
  } else if (prm.p.empty()) {
    out.used_fallback = true;
    out.aggregate_raw = s.fallback == EmptyFallback::Zero ? 0.0 : orm_score;
  } else {
    out.aggregate_raw = aggregate(aggregator_of(s.kind), prm.p);
  }
  out.aggregate = std::clamp(out.aggregate_raw, -s.clip, s.clip);
  out.r[n - 1] += out.aggregate;
  return out;
}

}  // namespace steprl::reward
