#include "steprl/sft/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "steprl/common/rng.hpp"
#include "steprl/nn/checkpoint.hpp"
#include "steprl/nn/graph.hpp"
#include "steprl/nn/optim.hpp"
#include "steprl/nn/sampler.hpp"

namespace steprl::sft {

using nn::Tensor;
using synth::tok::kEos;
using synth::tok::kPad;

SftBatch make_batch(const std::vector<synth::TokenSeq>& seqs) {
  SftBatch b;
  std::size_t width = 0;
  for (const auto& s : seqs) width = std::max(width, s.tokens.size());
  for (const auto& s : seqs) {
    std::vector<int> row(width, kPad);
    std::vector<double> m(width, 0.0);
    std::copy(s.tokens.begin(), s.tokens.end(), row.begin());
    for (std::size_t t = static_cast<std::size_t>(std::max(1, s.prompt_length)); t < s.tokens.size(); ++t) m[t] = 1.0;
    b.tokens.push_back(std::move(row));
    b.mask.push_back(std::move(m));
  }
  return b;
}

double sft_loss(const nn::ModelParams& p, const SftBatch& batch, nn::ModelParams* grads) {
  if (batch.tokens.size() != batch.mask.size()) throw std::invalid_argument("sft_loss: tokens/mask row mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < batch.tokens.size(); ++r) {
    if (batch.mask[r].size() != batch.tokens[r].size()) throw std::invalid_argument("sft_loss: tokens/mask width mismatch");
    if (!batch.mask[r].empty() && batch.mask[r][0] != 0.0) throw std::invalid_argument("sft_loss: position 0 has no context");
    total += std::accumulate(batch.mask[r].begin(), batch.mask[r].end(), 0.0);
  }
  if (total <= 0.0) throw std::invalid_argument("sft_loss: mask selects no tokens");

  double loss = 0.0;
  for (std::size_t r = 0; r < batch.tokens.size(); ++r) {
    const auto& row = batch.tokens[r];
    const auto& m = batch.mask[r];
    int last = -1;
    for (int t = static_cast<int>(m.size()) - 1; t >= 0; --t)
      if (m[static_cast<std::size_t>(t)] != 0.0) {
        last = t;
        break;
      }
    if (last < 1) continue;
    nn::Graph g;
    std::span<const int> inputs(row.data(), static_cast<std::size_t>(last));
    std::vector<int> targets(row.begin() + 1, row.begin() + last + 1);
    nn::Var lp = nn::log_softmax_rows(nn::forward(g, p, grads, inputs, nn::Head::LM));
    nn::Var picked = nn::gather_cols(lp, targets);
    Tensor w(last, 1);
    for (int t = 0; t < last; ++t) w(t, 0) = -m[static_cast<std::size_t>(t + 1)] / total;
    nn::Var l = nn::weighted_sum(picked, w);
    loss += l.value()[0];
    if (grads) g.backward(l);
  }
  return loss;
}

nlohmann::json to_json(const SftConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"batch_divisor", c.batch_divisor},
          {"lr", c.lr},         {"lr_scale", c.lr_scale},     {"weight_decay", c.weight_decay},
          {"max_grad_norm", c.max_grad_norm}, {"order", c.order}, {"seed", c.seed}};
}

SftConfig sft_config_from_json(const nlohmann::json& j) {
  SftConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.batch_divisor = j.value("batch_divisor", c.batch_divisor);
  c.lr = j.value("lr", c.lr);
  c.lr_scale = j.value("lr_scale", c.lr_scale);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.order = j.value("order", c.order);
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 0 || c.batch_size <= 0 || c.batch_divisor <= 0 || c.lr <= 0 || c.lr_scale <= 0)
    throw std::invalid_argument("invalid sft config: " + to_json(c).dump());
  if (c.order != "mixed" && c.order != "simple_first") throw std::invalid_argument("sft order must be mixed or simple_first");
  return c;
}

namespace {

std::vector<synth::TokenSeq> encode_all(const std::vector<synth::CorpusRecord>& recs) {
  std::vector<synth::TokenSeq> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(synth::encode(r.problem, r.solution));
  return out;
}

// Token-weighted mean loss over a whole split.
double split_loss(const nn::ModelParams& p, const std::vector<synth::TokenSeq>& seqs) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < seqs.size(); i += 32) {
    std::vector<synth::TokenSeq> chunk(seqs.begin() + static_cast<long>(i),
                                       seqs.begin() + static_cast<long>(std::min(seqs.size(), i + 32)));
    SftBatch b = make_batch(chunk);
    double n = 0.0;
    for (const auto& m : b.mask) n += std::accumulate(m.begin(), m.end(), 0.0);
    num += sft_loss(p, b) * n;
    den += n;
  }
  return den > 0 ? num / den : 0.0;
}

}  // namespace

SftResult train_sft(nn::ModelParams init, const std::vector<synth::CorpusRecord>& train,
                    const std::vector<synth::CorpusRecord>& val, const SftConfig& cfg, MetricsLog& metrics,
                    const std::filesystem::path& checkpoint) {
  if (train.empty() || val.empty()) throw std::invalid_argument("train_sft: empty train or held-out split");
  for (const auto& r : train)
    if (!r.solution.answer_correct) throw std::invalid_argument("train_sft: corpus contains an incorrect solution");

  const auto train_seqs = encode_all(train);
  const auto val_seqs = encode_all(val);
  const int per_update = std::max(1, cfg.batch_size / cfg.batch_divisor);
  const long updates_per_epoch = (static_cast<long>(train.size()) + per_update - 1) / per_update;

  nn::AdamWConfig ac;
  ac.base_lr = cfg.lr * cfg.lr_scale;
  ac.weight_decay = cfg.weight_decay;
  ac.horizon = updates_per_epoch * cfg.epochs;
  ac.max_grad_norm = cfg.max_grad_norm;
  nn::OptimizerState opt = nn::make_optimizer(init, ac);

  SftResult res;
  res.params = init;
  res.init_val_loss = split_loss(init, val_seqs);
  res.best_val_loss = res.init_val_loss;
  metrics.log("sft", 0, "val", "loss", res.init_val_loss);

  nn::ModelParams p = std::move(init);
  nn::ModelParams grads = nn::zeros_like(p.cfg);
  Rng rng(derive_seed(cfg.seed, hash_tag("sft_order")));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    if (cfg.order == "simple_first")
      std::stable_partition(order.begin(), order.end(),
                            [&](std::size_t i) { return train[i].problem.family == synth::Family::Simple; });

    double loss_sum = 0.0;
    long n_updates = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(per_update)) {
      std::vector<synth::TokenSeq> chunk;
      for (std::size_t k = i; k < std::min(order.size(), i + static_cast<std::size_t>(per_update)); ++k)
        chunk.push_back(train_seqs[order[k]]);
      nn::zero_grads(grads);
      const double l = sft_loss(p, make_batch(chunk), &grads);
      if (!std::isfinite(l))
        throw nn::NumericError("sft: non-finite loss at epoch " + std::to_string(epoch) + " update " + std::to_string(n_updates));
      nn::optimizer_step(p, grads, opt);
      loss_sum += l;
      ++n_updates;
    }
    const double train_loss = loss_sum / static_cast<double>(std::max<long>(1, n_updates));
    const double val_loss = split_loss(p, val_seqs);
    metrics.log("sft", epoch, "train", "loss", train_loss);
    metrics.log("sft", epoch, "val", "loss", val_loss);
    if (!std::isfinite(val_loss)) throw nn::NumericError("sft: non-finite held-out loss at epoch " + std::to_string(epoch));
    if (val_loss < res.best_val_loss || res.best_epoch == 0) {
      res.best_val_loss = val_loss;
      res.best_epoch = epoch;
      res.params = p;
      if (!checkpoint.empty()) {
        nn::Checkpoint ck{p, opt, {{"tag", "sft"}, {"epoch", epoch}, {"val_loss", val_loss}, {"config", to_json(cfg)}}};
        nn::save_checkpoint(checkpoint, ck);
      }
    }
  }
  return res;
}

nlohmann::ordered_json to_json(const EvalItem& it) {
  nlohmann::ordered_json j;
  j["family"] = it.family;
  j["prompt"] = it.prompt;
  j["generated"] = it.generated;
  j["well_formed"] = it.well_formed;
  j["correct"] = it.correct;
  j["steps_total"] = it.steps_total;
  j["steps_correct"] = it.steps_correct;
  return j;
}

EvalItem evaluate_generation(const synth::Problem& p, const std::vector<int>& continuation) {
  EvalItem it;
  it.family = std::string(synth::family_name(p.family));
  it.prompt = p.prompt_text;
  const bool ended = !continuation.empty() && continuation.back() == kEos;
  it.generated = synth::Vocabulary::decode_text(continuation);
  const std::int64_t oracle = synth::solve_reference(p).final_answer;

  std::vector<synth::Step> steps;
  if (auto parsed = synth::parse_solution(it.generated); parsed && ended) {
    it.well_formed = true;
    it.correct = parsed->answer == oracle;
    steps = parsed->steps;
  } else {
    steps = synth::parse_step_prefix(it.generated);
  }
  std::int64_t lhs = p.seed_value;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    ++it.steps_total;
    if (i < p.operations.size() && synth::step_is_correct(lhs, p.operations[i], steps[i])) ++it.steps_correct;
    lhs = steps[i].result;
  }
  return it;
}

EvalMetrics summarize(std::vector<EvalItem> items) {
  EvalMetrics m;
  m.n = static_cast<int>(items.size());
  long correct = 0, formed = 0, steps = 0, steps_ok = 0;
  for (const auto& it : items) {
    correct += it.correct;
    formed += it.well_formed;
    steps += it.steps_total;
    steps_ok += it.steps_correct;
  }
  if (m.n > 0) {
    m.accuracy = static_cast<double>(correct) / m.n;
    m.well_formed_rate = static_cast<double>(formed) / m.n;
  }
  m.step_correctness = steps > 0 ? static_cast<double>(steps_ok) / static_cast<double>(steps) : 0.0;
  m.items = std::move(items);
  return m;
}

EvalMetrics eval_accuracy(const nn::ModelParams& p, const std::vector<synth::Problem>& problems, const DecodeSpec& decode) {
  if (problems.empty()) throw std::invalid_argument("eval_accuracy: empty evaluation set");
  std::vector<EvalItem> items;
  items.reserve(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto prompt = synth::encode_prompt(problems[i]);
    nn::SampleOptions so;
    so.temperature = decode.temperature;
    so.eos_id = kEos;
    so.max_new = p.cfg.context - static_cast<int>(prompt.tokens.size());
    so.seed = derive_seed(decode.seed, i);
    const auto out = nn::sample(p, prompt.tokens, so);
    items.push_back(evaluate_generation(problems[i], out.continuation));
  }
  return summarize(std::move(items));
}

}  // namespace steprl::sft
