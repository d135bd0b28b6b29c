#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "steprl/nn/model.hpp"

namespace steprl::nn {

struct AdamWConfig {
  double base_lr = 1e-4;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t horizon = 0;  // schedule length in steps; 0 keeps lr constant
  double max_grad_norm = 0.0;  // global-norm clipping, 0 disables
  bool operator==(const AdamWConfig&) const = default;
};

nlohmann::json to_json(const AdamWConfig& c);
AdamWConfig adamw_config_from_json(const nlohmann::json& j);

// Cosine decay from base to 0 over the horizon, held at the final value after it.
double lr_at(std::int64_t step, double base_lr, std::int64_t horizon);

struct OptimizerState {
  AdamWConfig cfg;
  std::vector<Tensor> m, v;
  std::int64_t step = 0;
  bool operator==(const OptimizerState&) const = default;
};

OptimizerState make_optimizer(const std::vector<const Tensor*>& params, const AdamWConfig& cfg);
OptimizerState make_optimizer(const ModelParams& params, const AdamWConfig& cfg);

struct StepInfo {
  double lr = 0.0;
  double grad_norm = 0.0;
};

// One AdamW update with decoupled weight decay:
//   p <- p * (1 - lr * wd) - lr * mhat / (sqrt(vhat) + eps)
// Throws NumericError, leaving params and state untouched, when a gradient
// is non-finite. Throws std::invalid_argument on shape mismatch.
StepInfo optimizer_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, OptimizerState& st);
StepInfo optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& st);

}  // namespace steprl::nn
