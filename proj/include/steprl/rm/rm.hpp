#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "steprl/common/metrics.hpp"
#include "steprl/nn/graph.hpp"
#include "steprl/nn/model.hpp"
#include "steprl/synth/corpus.hpp"

namespace steprl::rm {

enum class Objective { Orm, Prm };

std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view s);

// Classifier-head classes. Probabilities downstream are always p(correct).
inline constexpr int kMisstep = 0;
inline constexpr int kClean = 1;

struct RmExample {
  synth::TokenSeq seq;
  std::vector<int> step_labels;  // kClean / kMisstep, aligned to seq.step_ends
  int sequence_label = kClean;   // kMisstep iff some step label is kMisstep
};

// Step labels are the per-step labels followed by the answer-step label.
// Throws std::invalid_argument when the labels are inconsistent.
RmExample make_example(const synth::CorpusRecord& r);
RmExample make_example(synth::TokenSeq seq, std::vector<int> step_labels);
std::vector<RmExample> make_examples(const std::vector<synth::CorpusRecord>& records);

// Loss graphs on [T x 2] classifier logits. Rows other than the terminal
// index (ORM) or the step ends (PRM) are never read.
nn::Var orm_loss(nn::Var logits, const RmExample& ex);
nn::Var prm_loss(nn::Var logits, const RmExample& ex);

// Model-level losses. With `grads`, grad_scale * dL/dparams is accumulated.
// prm_loss throws std::invalid_argument when S is empty.
double orm_loss(const nn::ModelParams& p, const RmExample& ex, nn::ModelParams* grads = nullptr, double grad_scale = 1.0);
double prm_loss(const nn::ModelParams& p, const RmExample& ex, nn::ModelParams* grads = nullptr, double grad_scale = 1.0);

struct StepScores {
  std::vector<double> p;  // p(correct) per entry of S
  double sequence = 0.0;  // p(clean) at the terminal index
  bool empty = false;     // no step boundaries were found
};

// p(clean) at the terminal index. Tokens after EOS are ignored.
double score_orm(const nn::ModelParams& rm, const synth::TokenSeq& seq);
StepScores score_prm(const nn::ModelParams& rm, const synth::TokenSeq& seq);

// Mann-Whitney AUC of scores for positives (label 1) over negatives; ties
// count one half. NaN when either class is absent.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RmMetrics {
  double loss = 0.0;
  double accuracy = 0.0;           // threshold 0.5 on p(correct)
  double auc = 0.0;
  double majority_baseline = 0.0;  // accuracy of always predicting the larger class
  double mean_p_correct = 0.0;     // over positives
  double mean_p_misstep = 0.0;     // over negatives
  long n = 0;                      // sequences (ORM) or steps (PRM)
};

nlohmann::ordered_json to_json(const RmMetrics& m);

RmMetrics evaluate_rm(const nn::ModelParams& rm, const std::vector<RmExample>& data, Objective obj);

struct RmConfig {
  Objective objective = Objective::Orm;
  int epochs = 3;
  int batch_size = 32;
  double lr = 1e-4;
  double lr_scale = 10.0;
  double weight_decay = 0.1;
  double max_grad_norm = 1.0;
  bool balanced = true;         // equal clean / misstep sequences per epoch
  bool shuffle_labels = false;  // no-signal control: permute training labels
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const RmConfig& c);
RmConfig rm_config_from_json(const nlohmann::json& j, Objective obj);

struct RmResult {
  nn::ModelParams params;  // best by held-out AUC
  int best_epoch = 0;
  RmMetrics init;
  RmMetrics best;
};

// Throws std::invalid_argument when the training or held-out data holds a
// single class. The best model is saved to `checkpoint` (tagged with the
// objective) when the path is non-empty.
RmResult train_rm(nn::ModelParams init, std::vector<RmExample> train, const std::vector<RmExample>& val,
                  const RmConfig& cfg, MetricsLog& metrics, const std::filesystem::path& checkpoint = {});
RmResult train_orm(nn::ModelParams init, std::vector<RmExample> train, const std::vector<RmExample>& val, RmConfig cfg,
                   MetricsLog& metrics, const std::filesystem::path& checkpoint = {});
RmResult train_prm(nn::ModelParams init, std::vector<RmExample> train, const std::vector<RmExample>& val, RmConfig cfg,
                   MetricsLog& metrics, const std::filesystem::path& checkpoint = {});

}  // namespace steprl::rm
