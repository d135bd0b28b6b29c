#include "steprl/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "steprl/common/rng.hpp"
#include "steprl/nn/sampler.hpp"

namespace steprl::ppo {

using nn::Tensor;
using nn::Var;

nn::ModelParams init_critic_from_orm_params(const nn::ModelParams& orm) {
  nn::ModelParams c = orm;
  for (int i = 0; i < c.cfg.d; ++i) c.value_w(i, 0) = orm.cls_w(i, rm::kClean) - orm.cls_w(i, rm::kMisstep);
  c.value_b(0, 0) = orm.cls_b(0, rm::kClean) - orm.cls_b(0, rm::kMisstep);
  return c;
}

nn::ModelParams init_critic_from_orm(const nn::Checkpoint& orm) {
  const std::string obj = orm.meta.value("objective", std::string());
  if (obj != "orm") throw std::invalid_argument("critic init needs an ORM checkpoint, got objective '" + obj + "'");
  return init_critic_from_orm_params(orm.params);
}

RewardSource model_rewards(const nn::ModelParams* orm, const nn::ModelParams* prm) {
  RewardSource s;
  if (orm) s.orm = [orm](const synth::TokenSeq& seq) { return rm::score_orm(*orm, seq); };
  if (prm) s.prm = [prm](const synth::TokenSeq& seq) { return rm::score_prm(*prm, seq); };
  return s;
}

RewardSource constant_rewards(double seq_score, double step_score) {
  RewardSource s;
  s.orm = [seq_score](const synth::TokenSeq&) { return seq_score; };
  s.prm = [step_score](const synth::TokenSeq& seq) {
    rm::StepScores sc;
    sc.p.assign(seq.step_ends.size(), step_score);
    sc.sequence = step_score;
    sc.empty = sc.p.empty();
    return sc;
  };
  return s;
}

void check_trajectory(const Trajectory& t) {
  const std::size_t n = t.response.size();
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::logic_error(std::string("trajectory invariant violated: ") + what);
  };
  need(n > 0, "empty response");
  need(t.logprobs.size() == n && t.ref_logprobs.size() == n && t.values.size() == n && t.kl.size() == n &&
           t.rewards.r.size() == n,
       "per-token arrays must have length n");
  need(t.seq.tokens.size() == static_cast<std::size_t>(t.seq.prompt_length) + n, "sequence = prompt + response");
  for (std::size_t i = 0; i < n; ++i) {
    need(std::isfinite(t.logprobs[i]) && std::isfinite(t.ref_logprobs[i]) && std::isfinite(t.values[i]) &&
             std::isfinite(t.rewards.r[i]),
         "non-finite per-token value");
    need(t.kl[i] == t.logprobs[i] - t.ref_logprobs[i], "kl = policy - reference");
  }
  if (!t.advantages.empty()) {
    need(t.advantages.size() == n && t.returns.size() == n, "advantages/returns length");
    for (std::size_t i = 0; i < n; ++i) need(std::isfinite(t.advantages[i]) && std::isfinite(t.returns[i]), "non-finite advantage");
  }
}

namespace {

std::span<const int> input_tokens(const std::vector<int>& tokens) {
  return {tokens.data(), tokens.size() - 1};
}

// Log-probabilities of the response tokens, [n x 1].
Var response_logprobs(nn::Graph& g, const nn::ModelParams& p, nn::ModelParams* grads, const std::vector<int>& tokens,
                      int prompt_len) {
  const int n = static_cast<int>(tokens.size()) - prompt_len;
  Var logits = nn::slice_rows(nn::forward(g, p, grads, input_tokens(tokens), nn::Head::LM), prompt_len - 1, n);
  std::vector<int> targets(tokens.begin() + prompt_len, tokens.end());
  return nn::gather_cols(nn::log_softmax_rows(logits), targets);
}

// Values of the states that emit each response token, [n x 1].
Var response_values(nn::Graph& g, const nn::ModelParams& p, nn::ModelParams* grads, const std::vector<int>& tokens,
                    int prompt_len) {
  const int n = static_cast<int>(tokens.size()) - prompt_len;
  return nn::slice_rows(nn::forward(g, p, grads, input_tokens(tokens), nn::Head::Value), prompt_len - 1, n);
}

std::vector<double> column_values(Var v) { return v.value().data; }

Tensor column(const std::vector<double>& xs) {
  Tensor t(static_cast<int>(xs.size()), 1);
  t.data = xs;
  return t;
}

}  // namespace

RolloutBatch collect_rollouts(const nn::ModelParams& policy, const nn::ModelParams& reference,
                              const nn::ModelParams& critic, const RewardSource& rewards,
                              const std::vector<synth::Problem>& prompts, const reward::RewardScheme& scheme,
                              const RolloutOptions& opt) {
  if (prompts.empty()) throw std::invalid_argument("collect_rollouts: no prompts");
  reward::validate(scheme);
  const bool need_prm = reward::uses_prm(scheme.kind);
  const bool need_orm = !need_prm || scheme.fallback == reward::EmptyFallback::OrmBackstop;
  if (need_prm && !rewards.prm) throw std::invalid_argument("collect_rollouts: scheme needs a PRM");
  if (need_orm && !rewards.orm) throw std::invalid_argument("collect_rollouts: scheme needs an ORM");

  RolloutBatch out;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto prompt = synth::encode_prompt(prompts[i]);
    nn::SampleOptions so;
    so.temperature = opt.temperature;
    so.eos_id = synth::tok::kEos;
    const int room = policy.cfg.context - static_cast<int>(prompt.tokens.size());
    so.max_new = opt.max_new > 0 ? std::min(opt.max_new, room) : room;
    so.seed = derive_seed(opt.seed, i);
    const auto sampled = nn::sample(policy, prompt.tokens, so);
    if (sampled.continuation.empty()) {
      ++out.dropped;
      continue;
    }
    Trajectory t;
    t.prompt_index = i;
    t.problem = prompts[i];
    t.response = sampled.continuation;
    t.seq = synth::assemble(prompt.tokens, t.response);
    const int plen = t.seq.prompt_length;
    {
      nn::Graph g;
      t.logprobs = column_values(response_logprobs(g, policy, nullptr, t.seq.tokens, plen));
    }
    {
      nn::Graph g;
      t.ref_logprobs = column_values(response_logprobs(g, reference, nullptr, t.seq.tokens, plen));
    }
    {
      nn::Graph g;
      t.values = column_values(response_values(g, critic, nullptr, t.seq.tokens, plen));
    }
    t.kl = reward::kl_per_token(t.logprobs, t.ref_logprobs);
    if (need_orm) t.orm_score = rewards.orm(t.seq);
    if (need_prm) t.prm = rewards.prm(t.seq);
    t.rewards = reward::shape_rewards(scheme, t.response.size(), t.kl, t.orm_score, t.prm);
    t.correct = sft::evaluate_generation(t.problem, t.response).correct;
    check_trajectory(t);
    out.trajectories.push_back(std::move(t));
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(const std::vector<double>& rewards,
                                                                const std::vector<double>& values, double gamma,
                                                                double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("compute_gae: " + std::to_string(rewards.size()) + " rewards vs " +
                                std::to_string(values.size()) + " values");
  const std::size_t n = rewards.size();
  std::vector<double> adv(n), ret(n);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_v = k + 1 < n ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next_v - values[k];
    next_adv = delta + gamma * lambda * next_adv;
    adv[k] = next_adv;
    ret[k] = adv[k] + values[k];
  }
  return {adv, ret};
}

double ppo_actor_loss(const std::vector<double>& new_logprobs, const std::vector<double>& old_logprobs,
                      const std::vector<double>& advantages, double eps) {
  const std::size_t n = new_logprobs.size();
  if (old_logprobs.size() != n || advantages.size() != n || n == 0)
    throw std::invalid_argument("ppo_actor_loss: length mismatch or empty input");
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double rho = std::exp(new_logprobs[t] - old_logprobs[t]);
    if (!std::isfinite(rho)) throw nn::NumericError("ppo_actor_loss: non-finite probability ratio");
    s -= std::min(rho * advantages[t], std::clamp(rho, 1.0 - eps, 1.0 + eps) * advantages[t]);
  }
  return s / static_cast<double>(n);
}

double ppo_critic_loss(const std::vector<double>& new_values, const std::vector<double>& old_values,
                       const std::vector<double>& returns, double clip) {
  const std::size_t n = new_values.size();
  if (old_values.size() != n || returns.size() != n || n == 0)
    throw std::invalid_argument("ppo_critic_loss: length mismatch or empty input");
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double a = new_values[t] - returns[t];
    const double b = old_values[t] + std::clamp(new_values[t] - old_values[t], -clip, clip) - returns[t];
    s += std::max(a * a, b * b);
  }
  return 0.5 * s / static_cast<double>(n);
}

Var ppo_actor_loss(Var new_logprobs, const std::vector<double>& old_logprobs, const std::vector<double>& advantages,
                   double eps, double weight) {
  nn::Graph& g = *new_logprobs.graph;
  const auto n = static_cast<std::size_t>(new_logprobs.rows());
  if (new_logprobs.cols() != 1 || old_logprobs.size() != n || advantages.size() != n)
    throw std::invalid_argument("ppo_actor_loss: shape mismatch");
  Var ratio = nn::exp(nn::sub(new_logprobs, g.constant(column(old_logprobs))));
  if (!ratio.value().all_finite()) throw nn::NumericError("ppo_actor_loss: non-finite probability ratio");
  Var adv = g.constant(column(advantages));
  Var surr = nn::minimum(nn::mul(ratio, adv), nn::mul(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), adv));
  Tensor w(static_cast<int>(n), 1);
  w.fill(-weight);
  return nn::weighted_sum(surr, w);
}

Var ppo_critic_loss(Var new_values, const std::vector<double>& old_values, const std::vector<double>& returns,
                    double clip, double weight) {
  nn::Graph& g = *new_values.graph;
  const auto n = static_cast<std::size_t>(new_values.rows());
  if (new_values.cols() != 1 || old_values.size() != n || returns.size() != n)
    throw std::invalid_argument("ppo_critic_loss: shape mismatch");
  Var old_v = g.constant(column(old_values));
  Var ret = g.constant(column(returns));
  Var clipped = nn::add(old_v, nn::clamp(nn::sub(new_values, old_v), -clip, clip));
  Var err = nn::maximum(nn::square(nn::sub(new_values, ret)), nn::square(nn::sub(clipped, ret)));
  Tensor w(static_cast<int>(n), 1);
  w.fill(0.5 * weight);
  return nn::weighted_sum(err, w);
}

void whiten_advantages(std::vector<Trajectory>& batch) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& t : batch) {
    for (double a : t.advantages) s += a;
    n += t.advantages.size();
  }
  if (n == 0) return;
  const double mean = s / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& t : batch)
    for (double a : t.advantages) ss += (a - mean) * (a - mean);
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
  for (auto& t : batch)
    for (double& a : t.advantages) a = (a - mean) * inv;
}

nlohmann::json to_json(const PpoConfig& c) {
  return {{"gamma", c.gamma},
          {"lambda", c.lambda},
          {"clip", c.clip},
          {"value_clip", c.value_clip},
          {"batch_size", c.batch_size},
          {"batch_divisor", c.batch_divisor},
          {"ppo_epochs", c.ppo_epochs},
          {"minibatches", c.minibatches},
          {"actor_lr", c.actor_lr},
          {"critic_lr", c.critic_lr},
          {"lr_scale", c.lr_scale},
          {"weight_decay", c.weight_decay},
          {"cosine", c.cosine},
          {"max_grad_norm", c.max_grad_norm},
          {"iterations", c.iterations},
          {"whiten", c.whiten},
          {"temperature", c.temperature},
          {"max_new", c.max_new},
          {"simple_fraction", c.simple_fraction},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed}};
}

void validate(const PpoConfig& c) {
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid ppo config: ") + what);
  };
  need(c.gamma > 0.0 && c.gamma <= 1.0, "gamma must be in (0, 1]");
  need(c.lambda >= 0.0 && c.lambda <= 1.0, "lambda must be in [0, 1]");
  need(c.clip > 0.0, "clip must be > 0");
  need(c.value_clip > 0.0, "value_clip must be > 0");
  need(c.batch_size > 0 && c.batch_divisor > 0, "batch sizes must be positive");
  need(c.ppo_epochs > 0 && c.minibatches > 0, "epochs and minibatches must be positive");
  need(c.actor_lr > 0 && c.critic_lr >= 0 && c.lr_scale > 0, "learning rates must be positive");
  need(c.iterations >= 0, "iterations must be >= 0");
  need(c.temperature >= 0.0, "temperature must be >= 0");
  need(c.simple_fraction >= 0.0 && c.simple_fraction <= 1.0, "simple_fraction must be in [0, 1]");
}

PpoConfig ppo_config_from_json(const nlohmann::json& j) {
  PpoConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.lambda = j.value("lambda", c.lambda);
  c.clip = j.value("clip", c.clip);
  c.value_clip = j.value("value_clip", c.value_clip);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.batch_divisor = j.value("batch_divisor", c.batch_divisor);
  c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
  c.minibatches = j.value("minibatches", c.minibatches);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.lr_scale = j.value("lr_scale", c.lr_scale);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.cosine = j.value("cosine", c.cosine);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.iterations = j.value("iterations", c.iterations);
  c.whiten = j.value("whiten", c.whiten);
  c.temperature = j.value("temperature", c.temperature);
  c.max_new = j.value("max_new", c.max_new);
  c.simple_fraction = j.value("simple_fraction", c.simple_fraction);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  validate(c);
  return c;
}

namespace {

void draw_from(const std::vector<synth::Problem>& pool, int count, Rng& rng, std::vector<synth::Problem>& out,
               const char* family) {
  if (count <= 0) return;
  if (pool.empty()) throw std::invalid_argument(std::string("draw_prompts: no ") + family + " prompts for the configured mix");
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < count; ++k) {
    const std::size_t slot = static_cast<std::size_t>(k) % idx.size();
    if (slot == 0) shuffle(idx, rng);
    out.push_back(pool[idx[slot]]);
  }
}

}  // namespace

std::vector<synth::Problem> draw_prompts(const PpoData& data, const PpoConfig& cfg, int iteration) {
  const int batch = std::max(1, cfg.batch_size / cfg.batch_divisor);
  const int n_simple = static_cast<int>(std::lround(batch * cfg.simple_fraction));
  Rng rng(derive_seed(cfg.seed, hash_tag("ppo_prompts"), static_cast<std::uint64_t>(iteration)));
  std::vector<synth::Problem> out;
  draw_from(data.simple_prompts, n_simple, rng, out, "Simple");
  draw_from(data.complex_prompts, batch - n_simple, rng, out, "Complex");
  return out;
}

namespace {

struct PpoState {
  nn::OptimizerState actor, critic;
  int iteration = 0;
  long updates = 0;
  int dropped = 0;
};

nn::AdamWConfig adam(double lr, const PpoConfig& cfg) {
  nn::AdamWConfig a;
  a.base_lr = lr * cfg.lr_scale;
  a.weight_decay = cfg.weight_decay;
  a.max_grad_norm = cfg.max_grad_norm;
  if (cfg.cosine) {
    const int batch = std::max(1, cfg.batch_size / cfg.batch_divisor);
    a.horizon = static_cast<std::int64_t>(cfg.iterations) * cfg.ppo_epochs * std::min(cfg.minibatches, batch);
  }
  return a;
}

void save_state(const std::filesystem::path& dir, const nn::ModelParams& policy, const nn::ModelParams& critic,
                const PpoState& st, const PpoConfig& cfg) {
  std::filesystem::create_directories(dir);
  const nlohmann::json meta = {{"tag", "ppo"},
                               {"iteration", st.iteration},
                               {"updates", st.updates},
                               {"dropped", st.dropped},
                               {"config", to_json(cfg)}};
  nn::Checkpoint c{critic, st.critic, meta};
  c.meta["role"] = "critic";
  nn::save_checkpoint(dir / "critic.ckpt", c);
  nn::Checkpoint p{policy, st.actor, meta};
  p.meta["role"] = "policy";
  nn::save_checkpoint(dir / "policy.ckpt", p);
}

}  // namespace

PpoResult train_ppo(nn::ModelParams policy, const nn::ModelParams& reference, nn::ModelParams critic,
                    const RewardSource& rewards, const PpoData& data, const reward::RewardScheme& scheme,
                    const PpoConfig& cfg, MetricsLog& metrics, const std::filesystem::path& checkpoint_dir, bool resume) {
  validate(cfg);
  reward::validate(scheme);
  PpoState st;
  st.actor = nn::make_optimizer(policy, adam(cfg.actor_lr, cfg));
  st.critic = nn::make_optimizer(critic, adam(cfg.critic_lr, cfg));
  if (resume && !checkpoint_dir.empty() && std::filesystem::exists(checkpoint_dir / "policy.ckpt") &&
      std::filesystem::exists(checkpoint_dir / "critic.ckpt")) {
    auto p = nn::load_checkpoint(checkpoint_dir / "policy.ckpt");
    auto c = nn::load_checkpoint(checkpoint_dir / "critic.ckpt");
    if (p.meta.value("iteration", -1) != c.meta.value("iteration", -2) || !p.optimizer || !c.optimizer)
      throw nn::CheckpointError("ppo resume: policy and critic checkpoints do not match");
    policy = std::move(p.params);
    critic = std::move(c.params);
    st.actor = std::move(*p.optimizer);
    st.critic = std::move(*c.optimizer);
    // The schedule follows the current config.
    st.actor.cfg = adam(cfg.actor_lr, cfg);
    st.critic.cfg = adam(cfg.critic_lr, cfg);
    st.iteration = p.meta.at("iteration").get<int>();
    st.updates = p.meta.at("updates").get<long>();
    st.dropped = p.meta.at("dropped").get<int>();
  }

  nn::ModelParams pgrad = nn::zeros_like(policy.cfg);
  nn::ModelParams cgrad = nn::zeros_like(critic.cfg);

  for (; st.iteration < cfg.iterations; ++st.iteration) {
    const int it = st.iteration;
    RolloutOptions ro;
    ro.temperature = cfg.temperature;
    ro.max_new = cfg.max_new;
    ro.seed = derive_seed(cfg.seed, hash_tag("ppo_rollout"), static_cast<std::uint64_t>(it));
    RolloutBatch batch = collect_rollouts(policy, reference, critic, rewards, draw_prompts(data, cfg, it), scheme, ro);
    st.dropped += batch.dropped;
    auto& trajs = batch.trajectories;
    if (trajs.empty()) continue;

    double reward_sum = 0.0, kl_sum = 0.0, agg_raw = 0.0, agg = 0.0, fallback = 0.0, correct = 0.0, len = 0.0;
    std::size_t tokens = 0;
    for (auto& t : trajs) {
      std::tie(t.advantages, t.returns) = compute_gae(t.rewards.r, t.values, cfg.gamma, cfg.lambda);
      reward_sum += std::accumulate(t.rewards.r.begin(), t.rewards.r.end(), 0.0);
      kl_sum += std::accumulate(t.kl.begin(), t.kl.end(), 0.0);
      tokens += t.response.size();
      agg_raw += t.rewards.aggregate_raw;
      agg += t.rewards.aggregate;
      fallback += t.rewards.used_fallback;
      correct += t.correct;
      len += static_cast<double>(t.response.size());
    }
    if (cfg.whiten) whiten_advantages(trajs);

    Rng rng(derive_seed(cfg.seed, hash_tag("ppo_minibatch"), static_cast<std::uint64_t>(it)));
    double actor_sum = 0.0, critic_sum = 0.0, clipped = 0.0;
    long steps = 0;
    std::size_t clip_count_den = 0;
    for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
      std::vector<std::size_t> order(trajs.size());
      std::iota(order.begin(), order.end(), 0);
      shuffle(order, rng);
      const std::size_t mbs = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatches), order.size());
      for (std::size_t m = 0; m < mbs; ++m) {
        const std::size_t lo = m * order.size() / mbs, hi = (m + 1) * order.size() / mbs;
        std::size_t n_tok = 0;
        for (std::size_t k = lo; k < hi; ++k) n_tok += trajs[order[k]].response.size();
        const double w = 1.0 / static_cast<double>(n_tok);
        nn::zero_grads(pgrad);
        nn::zero_grads(cgrad);
        double al = 0.0, cl = 0.0;
        for (std::size_t k = lo; k < hi; ++k) {
          const Trajectory& t = trajs[order[k]];
          {
            nn::Graph g;
            Var lp = response_logprobs(g, policy, &pgrad, t.seq.tokens, t.seq.prompt_length);
            for (std::size_t i = 0; i < t.response.size(); ++i) {
              const double rho = std::exp(lp.value()[i] - t.logprobs[i]);
              clipped += std::abs(rho - 1.0) > cfg.clip;
            }
            clip_count_den += t.response.size();
            Var l = ppo_actor_loss(lp, t.logprobs, t.advantages, cfg.clip, w);
            al += l.value()[0];
            g.backward(l);
          }
          {
            nn::Graph g;
            Var v = response_values(g, critic, &cgrad, t.seq.tokens, t.seq.prompt_length);
            Var l = ppo_critic_loss(v, t.values, t.returns, cfg.value_clip, w);
            cl += l.value()[0];
            g.backward(l);
          }
        }
        if (!std::isfinite(al) || !std::isfinite(cl))
          throw nn::NumericError("ppo: non-finite loss at iteration " + std::to_string(it) + " (actor " +
                                 std::to_string(al) + ", critic " + std::to_string(cl) + ")");
        nn::optimizer_step(policy, pgrad, st.actor);
        nn::optimizer_step(critic, cgrad, st.critic);
        actor_sum += al;
        critic_sum += cl;
        ++steps;
        ++st.updates;
      }
    }

    const double nt = static_cast<double>(trajs.size());
    const long step = it + 1;
    metrics.log("ppo", step, "train", "mean_reward", reward_sum / nt);
    metrics.log("ppo", step, "train", "mean_kl", kl_sum / static_cast<double>(tokens));
    metrics.log("ppo", step, "train", "aggregate_raw", agg_raw / nt);
    metrics.log("ppo", step, "train", "aggregate", agg / nt);
    metrics.log("ppo", step, "train", "fallback_rate", fallback / nt);
    metrics.log("ppo", step, "train", "rollout_accuracy", correct / nt);
    metrics.log("ppo", step, "train", "response_length", len / nt);
    metrics.log("ppo", step, "train", "actor_loss", actor_sum / static_cast<double>(std::max<long>(1, steps)));
    metrics.log("ppo", step, "train", "critic_loss", critic_sum / static_cast<double>(std::max<long>(1, steps)));
    metrics.log("ppo", step, "train", "clip_fraction", clipped / static_cast<double>(std::max<std::size_t>(1, clip_count_den)));
    if (cfg.eval_every > 0 && !data.eval_problems.empty() && step % cfg.eval_every == 0) {
      const auto m = sft::eval_accuracy(policy, data.eval_problems);
      metrics.log("ppo", step, "eval", "accuracy", m.accuracy);
      metrics.log("ppo", step, "eval", "step_correctness", m.step_correctness);
    }
    if (cfg.checkpoint_every > 0 && !checkpoint_dir.empty() && step % cfg.checkpoint_every == 0) {
      PpoState snap = st;
      snap.iteration = it + 1;
      save_state(checkpoint_dir, policy, critic, snap, cfg);
    }
  }

  PpoResult res;
  res.policy = std::move(policy);
  res.critic = std::move(critic);
  res.updates = st.updates;
  res.iterations = st.iteration;
  res.dropped = st.dropped;
  return res;
}

}  // namespace steprl::ppo
