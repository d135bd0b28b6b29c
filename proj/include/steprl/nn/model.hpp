#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "steprl/nn/graph.hpp"

namespace steprl::nn {

enum class Head { LM, Value, Classifier };

const char* head_name(Head h);

struct ModelConfig {
  int vocab = 22;
  int d = 64;
  int layers = 2;
  int heads = 2;
  int context = 160;
  double init_std = 0.1;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct BlockParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;  // [d x d]
  Tensor ln2_g, ln2_b;
  Tensor ff1_w, ff1_b;  // [d x 4d], [1 x 4d]
  Tensor ff2_w, ff2_b;  // [4d x d], [1 x d]
  bool operator==(const BlockParams&) const = default;
};

struct ModelParams {
  ModelConfig cfg;
  Tensor embed;  // [V x d]
  Tensor pos;    // [L x d]
  std::vector<BlockParams> blocks;
  Tensor lnf_g, lnf_b;
  Tensor lm_w;                 // [d x V]
  Tensor value_w, value_b;     // [d x 1], [1 x 1]
  Tensor cls_w, cls_b;         // [d x 2], [1 x 2]

  // Fixed traversal order used by the optimizer and checkpoints.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
  std::int64_t param_count() const;
  bool all_finite() const;
  bool operator==(const ModelParams&) const = default;
};

// Zero-filled parameters of the configured shapes.
ModelParams zeros_like(const ModelConfig& cfg);
void zero_grads(ModelParams& grads);

// Gaussian weights, unit norm gains, sinusoidal positional table, zero heads
// for Value and Classifier.
ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

// Records the forward pass on `g`. Gradients of the parameters accumulate
// into `grads` on backward when it is non-null. Returns [T x V] logits for
// LM, [T x 1] values for Value and [T x 2] logits for Classifier.
// Throws std::invalid_argument on an empty or overlong sequence or an
// out-of-vocabulary id.
Var forward(Graph& g, const ModelParams& p, ModelParams* grads, std::span<const int> tokens, Head head);

// Graph-free convenience wrapper.
Tensor infer(const ModelParams& p, std::span<const int> tokens, Head head);

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens);

}  // namespace steprl::nn
