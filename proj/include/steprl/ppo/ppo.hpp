#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "steprl/common/metrics.hpp"
#include "steprl/nn/checkpoint.hpp"
#include "steprl/nn/graph.hpp"
#include "steprl/nn/model.hpp"
#include "steprl/nn/optim.hpp"
#include "steprl/reward/reward.hpp"
#include "steprl/sft/sft.hpp"

namespace steprl::ppo {

// Critic with the ORM backbone; the value head is the clean-minus-misstep
// classifier column, so V = logit p(clean) at initialization. Throws
// std::invalid_argument unless the checkpoint is tagged objective "orm".
nn::ModelParams init_critic_from_orm(const nn::Checkpoint& orm);
nn::ModelParams init_critic_from_orm_params(const nn::ModelParams& orm);

// Reward-model scores. Either member may be empty when the scheme does not
// need it.
struct RewardSource {
  std::function<double(const synth::TokenSeq&)> orm;
  std::function<rm::StepScores(const synth::TokenSeq&)> prm;
};

RewardSource model_rewards(const nn::ModelParams* orm, const nn::ModelParams* prm);
// Every sequence gets `seq_score`; every step end gets `step_score`.
RewardSource constant_rewards(double seq_score, double step_score);

struct Trajectory {
  std::size_t prompt_index = 0;
  synth::Problem problem;
  synth::TokenSeq seq;             // prompt + continuation
  std::vector<int> response;       // the n generated tokens
  std::vector<double> logprobs;    // policy, teacher-forced at collection
  std::vector<double> ref_logprobs;
  std::vector<double> values;      // critic value of the state emitting each token
  std::vector<double> kl;
  reward::ShapedRewards rewards;
  double orm_score = 0.0;
  rm::StepScores prm;
  std::vector<double> advantages;  // empty until GAE runs
  std::vector<double> returns;
  bool correct = false;
};

// Throws std::logic_error naming the broken invariant.
void check_trajectory(const Trajectory& t);

struct RolloutOptions {
  double temperature = 1.0;
  int max_new = 0;  // 0: fill the context
  std::uint64_t seed = 0;
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  int dropped = 0;  // generations with zero tokens
};

// Samples one continuation per prompt (seeded by prompt position), scores it,
// and fills log-probs, values, KL and shaped rewards.
RolloutBatch collect_rollouts(const nn::ModelParams& policy, const nn::ModelParams& reference,
                              const nn::ModelParams& critic, const RewardSource& rewards,
                              const std::vector<synth::Problem>& prompts, const reward::RewardScheme& scheme,
                              const RolloutOptions& opt);

// delta_t = r_t + gamma V_{t+1} - V_t with V_n = 0; A_t = delta_t + gamma lambda A_{t+1};
// R_t = A_t + V_t. Throws std::invalid_argument on a length mismatch.
std::pair<std::vector<double>, std::vector<double>> compute_gae(const std::vector<double>& rewards,
                                                                const std::vector<double>& values, double gamma,
                                                                double lambda);

// Mean over tokens of -min(rho A, clamp(rho, 1-eps, 1+eps) A), rho = exp(new - old).
// Throws nn::NumericError on a non-finite ratio.
double ppo_actor_loss(const std::vector<double>& new_logprobs, const std::vector<double>& old_logprobs,
                      const std::vector<double>& advantages, double eps);
// 0.5 * mean of max((V - R)^2, (clamp(V, Vold - c, Vold + c) - R)^2).
double ppo_critic_loss(const std::vector<double>& new_values, const std::vector<double>& old_values,
                       const std::vector<double>& returns, double clip);

// Graph forms. Each returns weight * (sum of per-token terms) for an [n x 1]
// column, so weight = 1/N over a minibatch of N tokens gives the mean.
nn::Var ppo_actor_loss(nn::Var new_logprobs, const std::vector<double>& old_logprobs,
                       const std::vector<double>& advantages, double eps, double weight);
nn::Var ppo_critic_loss(nn::Var new_values, const std::vector<double>& old_values, const std::vector<double>& returns,
                        double clip, double weight);

// In-place mean-0 / std-1 normalization over all tokens of the batch. A
// batch with one token or zero spread is only centered.
void whiten_advantages(std::vector<Trajectory>& batch);

struct PpoConfig {
  double gamma = 1.0;
  double lambda = 0.95;
  double clip = 0.2;
  double value_clip = 0.2;
  int batch_size = 144;
  int batch_divisor = 8;  // rollouts per iteration = batch_size / batch_divisor
  int ppo_epochs = 4;
  int minibatches = 4;
  double actor_lr = 1e-4;
  double critic_lr = 5e-5;
  double lr_scale = 1.0;
  double weight_decay = 0.1;
  bool cosine = true;  // cosine decay over all planned updates
  double max_grad_norm = 1.0;
  int iterations = 20;
  bool whiten = true;
  double temperature = 1.0;
  int max_new = 0;
  double simple_fraction = 0.5;  // prompt mix
  int eval_every = 0;            // iterations; 0 disables
  int checkpoint_every = 0;      // iterations; 0 disables
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const PpoConfig& c);
PpoConfig ppo_config_from_json(const nlohmann::json& j);
void validate(const PpoConfig& c);

struct PpoData {
  std::vector<synth::Problem> simple_prompts;
  std::vector<synth::Problem> complex_prompts;
  std::vector<synth::Problem> eval_problems;  // for periodic eval, may be empty
};

struct PpoResult {
  nn::ModelParams policy;
  nn::ModelParams critic;
  long updates = 0;  // optimizer steps on the policy
  int iterations = 0;
  int dropped = 0;
};

// Prompts of one iteration: round(batch * simple_fraction) Simple prompts and
// the rest Complex, drawn without replacement per iteration from the pools.
std::vector<synth::Problem> draw_prompts(const PpoData& data, const PpoConfig& cfg, int iteration);

// Iterates collect -> GAE -> whitening -> minibatch epochs. Metrics are
// logged per iteration under stage "ppo". With a checkpoint directory the
// policy and critic are saved every checkpoint_every iterations and a run
// can continue from them (`resume`). Throws nn::NumericError when a loss or
// gradient turns non-finite; the last periodic checkpoint is kept.
PpoResult train_ppo(nn::ModelParams policy, const nn::ModelParams& reference, nn::ModelParams critic,
                    const RewardSource& rewards, const PpoData& data, const reward::RewardScheme& scheme,
                    const PpoConfig& cfg, MetricsLog& metrics, const std::filesystem::path& checkpoint_dir = {},
                    bool resume = false);

}  // namespace steprl::ppo
