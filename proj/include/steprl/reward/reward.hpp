#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "steprl/rm/rm.hpp"

namespace steprl::reward {

enum class Kind { Orm, PrmAvg, PrmProd, PrmMax, PrmMin };
enum class Aggregator { Avg, Prod, Max, Min };
enum class EmptyFallback { Zero, OrmBackstop };

// Config names: orm, prm_avg, prm_prod, prm_max, prm_min.
std::string_view kind_name(Kind k);
Kind parse_kind(std::string_view s);
bool uses_prm(Kind k);
Aggregator aggregator_of(Kind k);  // throws for Kind::Orm
std::string_view fallback_name(EmptyFallback f);
EmptyFallback parse_fallback(std::string_view s);

struct RewardScheme {
  Kind kind = Kind::Orm;
  double beta = 0.2;  // KL penalty coefficient
  double clip = 0.7;  // symmetric clamp on the learned-reward aggregate
  EmptyFallback fallback = EmptyFallback::Zero;
};

// Throws std::invalid_argument when beta < 0 or clip <= 0.
void validate(const RewardScheme& s);
nlohmann::json to_json(const RewardScheme& s);
RewardScheme reward_scheme_from_json(const nlohmann::json& j);

struct ShapedRewards {
  std::vector<double> r;        // one per generated token
  double aggregate_raw = 0.0;   // before clamping
  double aggregate = 0.0;       // after clamping
  bool used_fallback = false;   // PRM scores were empty
};

// k_t = policy_t - reference_t. Throws std::invalid_argument on a length mismatch.
std::vector<double> kl_per_token(const std::vector<double>& policy_logprobs,
                                 const std::vector<double>& reference_logprobs);

// Throws std::invalid_argument on an empty score vector.
double aggregate(Aggregator a, const std::vector<double>& scores);

// r_t = -beta k_t for t < n; r_n = -beta k_n + clamp(A, -clip, clip) with A the
// ORM score or the aggregated PRM step scores. Throws std::invalid_argument
// when kl.size() != n or n == 0.
ShapedRewards shape_rewards(const RewardScheme& s, std::size_t n, const std::vector<double>& kl, double orm_score,
                            const rm::StepScores& prm);

}  // namespace steprl::reward
