#include "steprl/rm/rm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "steprl/common/rng.hpp"
#include "steprl/nn/checkpoint.hpp"
#include "steprl/nn/optim.hpp"

namespace steprl::rm {

using nn::Tensor;
using nn::Var;

std::string_view objective_name(Objective o) { return o == Objective::Orm ? "orm" : "prm"; }

Objective parse_objective(std::string_view s) {
  if (s == "orm" || s == "ORM") return Objective::Orm;
  if (s == "prm" || s == "PRM") return Objective::Prm;
  throw std::invalid_argument("unknown reward-model objective '" + std::string(s) + "'");
}

RmExample make_example(synth::TokenSeq seq, std::vector<int> step_labels) {
  if (step_labels.size() != seq.step_ends.size())
    throw std::invalid_argument("make_example: " + std::to_string(step_labels.size()) + " labels for " +
                                std::to_string(seq.step_ends.size()) + " step ends");
  for (int y : step_labels)
    if (y != kClean && y != kMisstep) throw std::invalid_argument("make_example: label must be 0 or 1");
  if (seq.terminal_index < 0 || seq.terminal_index >= static_cast<int>(seq.tokens.size()))
    throw std::invalid_argument("make_example: missing terminal index");
  RmExample ex;
  ex.sequence_label = std::count(step_labels.begin(), step_labels.end(), kMisstep) > 0 ? kMisstep : kClean;
  ex.seq = std::move(seq);
  ex.step_labels = std::move(step_labels);
  return ex;
}

RmExample make_example(const synth::CorpusRecord& r) {
  auto seq = synth::encode(r.problem, r.solution);
  std::vector<int> labels;
  for (bool b : r.solution.step_labels) labels.push_back(b ? kClean : kMisstep);
  labels.push_back(synth::answer_step_correct(r.solution) ? kClean : kMisstep);
  RmExample ex = make_example(std::move(seq), std::move(labels));
  if ((ex.sequence_label == kClean) != r.solution.answer_correct)
    throw std::invalid_argument("make_example: sequence label disagrees with step labels");
  return ex;
}

std::vector<RmExample> make_examples(const std::vector<synth::CorpusRecord>& records) {
  std::vector<RmExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_example(r));
  return out;
}

Var orm_loss(Var logits, const RmExample& ex) {
  const int n = ex.seq.terminal_index;
  if (n < 0 || n >= logits.rows()) throw std::invalid_argument("orm_loss: terminal index outside logits");
  const int row[1] = {n};
  const int label[1] = {ex.sequence_label};
  Var lp = nn::log_softmax_rows(nn::pick_rows(logits, row));
  return nn::scale(nn::sum(nn::gather_cols(lp, label)), -1.0);
}

Var prm_loss(Var logits, const RmExample& ex) {
  const auto& S = ex.seq.step_ends;
  if (S.empty()) throw std::invalid_argument("prm_loss: empty step set");
  if (ex.step_labels.size() != S.size()) throw std::invalid_argument("prm_loss: labels not aligned to step ends");
  for (int i : S)
    if (i < 0 || i >= logits.rows()) throw std::invalid_argument("prm_loss: step index outside logits");
  Var lp = nn::log_softmax_rows(nn::pick_rows(logits, S));
  Var picked = nn::gather_cols(lp, ex.step_labels);
  Tensor w(static_cast<int>(S.size()), 1);
  w.fill(-1.0 / static_cast<double>(S.size()));
  return nn::weighted_sum(picked, w);
}

namespace {

// Tokens up to and including the terminal index.
std::span<const int> scored_tokens(const synth::TokenSeq& seq) {
  if (seq.terminal_index < 0 || seq.terminal_index >= static_cast<int>(seq.tokens.size()))
    throw std::invalid_argument("reward model: sequence has no terminal index");
  return {seq.tokens.data(), static_cast<std::size_t>(seq.terminal_index) + 1};
}

double model_loss(const nn::ModelParams& p, const RmExample& ex, nn::ModelParams* grads, double grad_scale,
                  Var (*loss)(Var, const RmExample&)) {
  nn::Graph g;
  Var logits = nn::forward(g, p, grads, scored_tokens(ex.seq), nn::Head::Classifier);
  Var l = loss(logits, ex);
  const double v = l.value()[0];
  if (grads) g.backward(grad_scale == 1.0 ? l : nn::scale(l, grad_scale));
  return v;
}

double p_clean(const Tensor& logits, int row) {
  const double a = logits(row, kMisstep), b = logits(row, kClean);
  return 1.0 / (1.0 + std::exp(a - b));
}

}  // namespace

double orm_loss(const nn::ModelParams& p, const RmExample& ex, nn::ModelParams* grads, double grad_scale) {
  return model_loss(p, ex, grads, grad_scale, &orm_loss);
}

double prm_loss(const nn::ModelParams& p, const RmExample& ex, nn::ModelParams* grads, double grad_scale) {
  if (ex.seq.step_ends.empty()) throw std::invalid_argument("prm_loss: empty step set");
  return model_loss(p, ex, grads, grad_scale, &prm_loss);
}

double score_orm(const nn::ModelParams& rm, const synth::TokenSeq& seq) {
  const Tensor logits = nn::infer(rm, scored_tokens(seq), nn::Head::Classifier);
  return p_clean(logits, seq.terminal_index);
}

StepScores score_prm(const nn::ModelParams& rm, const synth::TokenSeq& seq) {
  StepScores s;
  const Tensor logits = nn::infer(rm, scored_tokens(seq), nn::Head::Classifier);
  s.sequence = p_clean(logits, seq.terminal_index);
  for (int i : seq.step_ends) {
    if (i > seq.terminal_index) throw std::invalid_argument("score_prm: step end after the terminal index");
    s.p.push_back(p_clean(logits, i));
  }
  s.empty = s.p.empty();
  return s;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over ties.
  double rank_sum = 0.0;
  long pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) {
        rank_sum += avg;
        ++pos;
      }
    i = j + 1;
  }
  const long neg = static_cast<long>(scores.size()) - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  return (rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1)) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

nlohmann::ordered_json to_json(const RmMetrics& m) {
  nlohmann::ordered_json j;
  j["loss"] = m.loss;
  j["accuracy"] = m.accuracy;
  j["auc"] = m.auc;
  j["majority_baseline"] = m.majority_baseline;
  j["mean_p_correct"] = m.mean_p_correct;
  j["mean_p_misstep"] = m.mean_p_misstep;
  j["n"] = m.n;
  return j;
}

RmMetrics evaluate_rm(const nn::ModelParams& rm, const std::vector<RmExample>& data, Objective obj) {
  RmMetrics m;
  std::vector<double> scores;
  std::vector<int> labels;
  double loss = 0.0;
  for (const auto& ex : data) {
    const Tensor logits = nn::infer(rm, scored_tokens(ex.seq), nn::Head::Classifier);
    if (obj == Objective::Orm) {
      scores.push_back(p_clean(logits, ex.seq.terminal_index));
      labels.push_back(ex.sequence_label);
      loss -= std::log(ex.sequence_label == kClean ? scores.back() : 1.0 - scores.back());
    } else {
      double l = 0.0;
      for (std::size_t k = 0; k < ex.seq.step_ends.size(); ++k) {
        scores.push_back(p_clean(logits, ex.seq.step_ends[k]));
        labels.push_back(ex.step_labels[k]);
        l -= std::log(labels.back() == kClean ? scores.back() : 1.0 - scores.back());
      }
      if (!ex.seq.step_ends.empty()) loss += l / static_cast<double>(ex.seq.step_ends.size());
    }
  }
  m.n = static_cast<long>(scores.size());
  if (m.n == 0) return m;
  m.loss = loss / static_cast<double>(data.size());
  long hit = 0, pos = 0;
  double sp = 0.0, sn = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    hit += (scores[i] >= 0.5) == (labels[i] == kClean);
    if (labels[i] == kClean) {
      ++pos;
      sp += scores[i];
    } else {
      sn += scores[i];
    }
  }
  const long neg = m.n - pos;
  m.accuracy = static_cast<double>(hit) / static_cast<double>(m.n);
  m.majority_baseline = static_cast<double>(std::max(pos, neg)) / static_cast<double>(m.n);
  m.mean_p_correct = pos ? sp / static_cast<double>(pos) : 0.0;
  m.mean_p_misstep = neg ? sn / static_cast<double>(neg) : 0.0;
  m.auc = auc(scores, labels);
  return m;
}

nlohmann::json to_json(const RmConfig& c) {
  return {{"objective", objective_name(c.objective)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_scale", c.lr_scale},
          {"weight_decay", c.weight_decay},
          {"max_grad_norm", c.max_grad_norm},
          {"balanced", c.balanced},
          {"shuffle_labels", c.shuffle_labels},
          {"seed", c.seed}};
}

RmConfig rm_config_from_json(const nlohmann::json& j, Objective obj) {
  RmConfig c;
  c.objective = obj;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_scale = j.value("lr_scale", c.lr_scale);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.balanced = j.value("balanced", c.balanced);
  c.shuffle_labels = j.value("shuffle_labels", c.shuffle_labels);
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 0 || c.batch_size <= 0 || c.lr <= 0 || c.lr_scale <= 0)
    throw std::invalid_argument("invalid reward-model config: " + to_json(c).dump());
  return c;
}

namespace {

void require_both_classes(const std::vector<RmExample>& data, Objective obj, const char* what) {
  bool has[2] = {false, false};
  for (const auto& ex : data) {
    if (obj == Objective::Orm) {
      has[ex.sequence_label] = true;
    } else {
      for (int y : ex.step_labels) has[y] = true;
    }
  }
  if (!has[0] || !has[1]) throw std::invalid_argument(std::string("train_rm: ") + what + " data contains a single class");
}

void permute_labels(std::vector<RmExample>& data, Objective obj, Rng& rng) {
  if (obj == Objective::Orm) {
    std::vector<int> ys;
    for (const auto& ex : data) ys.push_back(ex.sequence_label);
    shuffle(ys, rng);
    for (std::size_t i = 0; i < data.size(); ++i) data[i].sequence_label = ys[i];
    return;
  }
  std::vector<int> ys;
  for (const auto& ex : data) ys.insert(ys.end(), ex.step_labels.begin(), ex.step_labels.end());
  shuffle(ys, rng);
  std::size_t k = 0;
  for (auto& ex : data) {
    for (int& y : ex.step_labels) y = ys[k++];
    ex.sequence_label = std::count(ex.step_labels.begin(), ex.step_labels.end(), kMisstep) ? kMisstep : kClean;
  }
}

// Epoch order. Balanced mode cycles the smaller class up to the size of the
// larger one so both appear equally often.
std::vector<std::size_t> epoch_order(const std::vector<RmExample>& data, bool balanced, Rng& rng) {
  std::vector<std::size_t> order;
  if (!balanced) {
    order.resize(data.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    return order;
  }
  std::vector<std::size_t> cls[2];
  for (std::size_t i = 0; i < data.size(); ++i) cls[data[i].sequence_label].push_back(i);
  if (cls[0].empty() || cls[1].empty()) {
    order.resize(data.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    return order;
  }
  const std::size_t n = std::max(cls[0].size(), cls[1].size());
  for (auto& c : cls) {
    shuffle(c, rng);
    for (std::size_t i = 0; i < n; ++i) order.push_back(c[i % c.size()]);
  }
  shuffle(order, rng);
  return order;
}

}  // namespace

RmResult train_rm(nn::ModelParams init, std::vector<RmExample> train, const std::vector<RmExample>& val,
                  const RmConfig& cfg, MetricsLog& metrics, const std::filesystem::path& checkpoint) {
  const Objective obj = cfg.objective;
  const std::string stage(objective_name(obj));
  require_both_classes(train, obj, "training");
  require_both_classes(val, obj, "held-out");
  Rng rng(derive_seed(cfg.seed, hash_tag("rm_order"), obj == Objective::Orm ? 1 : 2));
  if (cfg.shuffle_labels) permute_labels(train, obj, rng);
  if (obj == Objective::Prm)
    std::erase_if(train, [](const RmExample& ex) { return ex.seq.step_ends.empty(); });

  const std::size_t per_epoch = epoch_order(train, cfg.balanced, rng).size();
  nn::AdamWConfig ac;
  ac.base_lr = cfg.lr * cfg.lr_scale;
  ac.weight_decay = cfg.weight_decay;
  ac.max_grad_norm = cfg.max_grad_norm;
  ac.horizon = static_cast<std::int64_t>((per_epoch + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                         static_cast<std::size_t>(cfg.batch_size)) * cfg.epochs;
  nn::OptimizerState opt = nn::make_optimizer(init, ac);

  auto log_metrics = [&](long epoch, const RmMetrics& m) {
    metrics.log(stage, epoch, "val", "loss", m.loss);
    metrics.log(stage, epoch, "val", "accuracy", m.accuracy);
    metrics.log(stage, epoch, "val", "auc", m.auc);
    metrics.log(stage, epoch, "val", "majority_baseline", m.majority_baseline);
  };

  RmResult res;
  res.params = init;
  res.init = evaluate_rm(init, val, obj);
  res.best = res.init;
  log_metrics(0, res.init);

  nn::ModelParams p = std::move(init);
  nn::ModelParams grads = nn::zeros_like(p.cfg);
  auto loss_fn = [obj](const nn::ModelParams& q, const RmExample& ex, nn::ModelParams* g, double w) {
    return obj == Objective::Orm ? orm_loss(q, ex, g, w) : prm_loss(q, ex, g, w);
  };
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // The first order was drawn to size the schedule; redraw per epoch.
    const auto order = epoch_order(train, cfg.balanced, rng);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
      const double w = 1.0 / static_cast<double>(end - i);
      nn::zero_grads(grads);
      double l = 0.0;
      for (std::size_t k = i; k < end; ++k) l += w * loss_fn(p, train[order[k]], &grads, w);
      if (!std::isfinite(l)) throw nn::NumericError(stage + ": non-finite loss at epoch " + std::to_string(epoch));
      nn::optimizer_step(p, grads, opt);
      loss_sum += l * static_cast<double>(end - i);
    }
    metrics.log(stage, epoch, "train", "loss", loss_sum / static_cast<double>(std::max<std::size_t>(1, order.size())));
    const RmMetrics m = evaluate_rm(p, val, obj);
    log_metrics(epoch, m);
    if (res.best_epoch == 0 || m.auc > res.best.auc) {
      res.best = m;
      res.best_epoch = epoch;
      res.params = p;
      if (!checkpoint.empty()) {
        nn::Checkpoint ck{p, opt,
                          {{"tag", "rm"}, {"objective", stage}, {"epoch", epoch}, {"val", to_json(m)}, {"config", to_json(cfg)}}};
        nn::save_checkpoint(checkpoint, ck);
      }
    }
  }
  return res;
}

RmResult train_orm(nn::ModelParams init, std::vector<RmExample> train, const std::vector<RmExample>& val, RmConfig cfg,
                   MetricsLog& metrics, const std::filesystem::path& checkpoint) {
  cfg.objective = Objective::Orm;
  return train_rm(std::move(init), std::move(train), val, cfg, metrics, checkpoint);
}

RmResult train_prm(nn::ModelParams init, std::vector<RmExample> train, const std::vector<RmExample>& val, RmConfig cfg,
                   MetricsLog& metrics, const std::filesystem::path& checkpoint) {
  cfg.objective = Objective::Prm;
  return train_rm(std::move(init), std::move(train), val, cfg, metrics, checkpoint);
}

}  // namespace steprl::rm
