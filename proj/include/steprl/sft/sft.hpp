#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "steprl/common/metrics.hpp"
#include "steprl/nn/model.hpp"
#include "steprl/synth/corpus.hpp"

namespace steprl::sft {

// Padded token rows with a target mask: mask[r][t] = 1 when token t of row r
// is a solution token to be predicted from positions < t.
struct SftBatch {
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> mask;
};

SftBatch make_batch(const std::vector<synth::TokenSeq>& seqs);

// Mean negative log-likelihood over masked targets. When `grads` is given the
// gradient of that mean is accumulated into it. Throws std::invalid_argument
// on an all-zero mask.
double sft_loss(const nn::ModelParams& p, const SftBatch& batch, nn::ModelParams* grads = nullptr);

struct SftConfig {
  int epochs = 6;
  int batch_size = 152;
  int batch_divisor = 8;  // effective batch = batch_size / batch_divisor
  double lr = 6e-5;
  double lr_scale = 10.0;
  double weight_decay = 0.1;
  double max_grad_norm = 1.0;
  // "mixed" shuffles both families together; "simple_first" presents the
  // Simple records of each epoch before the Complex ones.
  std::string order = "mixed";
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const SftConfig& c);
SftConfig sft_config_from_json(const nlohmann::json& j);

struct SftResult {
  nn::ModelParams params;  // best by held-out loss
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double init_val_loss = 0.0;
};

// Trains with AdamW under a cosine schedule over all updates. Logs per-epoch
// train and held-out loss; the best model by held-out loss is written to
// `checkpoint` when the path is non-empty. A non-finite loss or gradient
// throws nn::NumericError after the best checkpoint so far is kept.
SftResult train_sft(nn::ModelParams init, const std::vector<synth::CorpusRecord>& train,
                    const std::vector<synth::CorpusRecord>& val, const SftConfig& cfg, MetricsLog& metrics,
                    const std::filesystem::path& checkpoint = {});

struct DecodeSpec {
  double temperature = 0.0;  // 0: greedy
  std::uint64_t seed = 0;
};

struct EvalItem {
  std::string family;
  std::string prompt;
  std::string generated;
  bool well_formed = false;
  bool correct = false;
  int steps_total = 0;
  int steps_correct = 0;
};

nlohmann::ordered_json to_json(const EvalItem& it);

struct EvalMetrics {
  double accuracy = 0.0;
  double well_formed_rate = 0.0;
  double step_correctness = 0.0;  // micro average over generated steps
  int n = 0;
  std::vector<EvalItem> items;
};

// Metrics from per-item records.
EvalMetrics summarize(std::vector<EvalItem> items);

EvalItem evaluate_generation(const synth::Problem& p, const std::vector<int>& continuation);

// Decodes every prompt and scores the answer after '#'. Throws
// std::invalid_argument on an empty set.
EvalMetrics eval_accuracy(const nn::ModelParams& p, const std::vector<synth::Problem>& problems,
                          const DecodeSpec& decode = {});

}  // namespace steprl::sft
