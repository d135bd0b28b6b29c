#include "steprl/nn/optim.hpp"

#include <cmath>
#include <numbers>

namespace steprl::nn {

nlohmann::json to_json(const AdamWConfig& c) {
  return {{"base_lr", c.base_lr}, {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"eps", c.eps},         {"horizon", c.horizon},           {"max_grad_norm", c.max_grad_norm}};
}

AdamWConfig adamw_config_from_json(const nlohmann::json& j) {
  AdamWConfig c;
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.horizon = j.value("horizon", c.horizon);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  return c;
}

double lr_at(std::int64_t step, double base_lr, std::int64_t horizon) {
  if (horizon <= 0) return base_lr;
  const std::int64_t s = std::clamp<std::int64_t>(step, 0, horizon);
  const double lr = 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(s) / static_cast<double>(horizon)));
  return std::max(0.0, lr);
}

OptimizerState make_optimizer(const std::vector<const Tensor*>& params, const AdamWConfig& cfg) {
  OptimizerState st;
  st.cfg = cfg;
  for (const Tensor* p : params) {
    st.m.emplace_back(p->rows, p->cols);
    st.v.emplace_back(p->rows, p->cols);
  }
  return st;
}

OptimizerState make_optimizer(const ModelParams& params, const AdamWConfig& cfg) {
  return make_optimizer(params.tensors(), cfg);
}

StepInfo optimizer_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, OptimizerState& st) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("optimizer_step: parameter/gradient/state count mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(st.m[i]))
      throw std::invalid_argument("optimizer_step: shape mismatch at tensor " + std::to_string(i));
    for (double g : grads[i]->data) {
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in tensor " + std::to_string(i) + " at step " + std::to_string(st.step));
      sq += g * g;
    }
  }
  StepInfo info;
  info.grad_norm = std::sqrt(sq);
  info.lr = lr_at(st.step, st.cfg.base_lr, st.cfg.horizon);
  double gscale = 1.0;
  if (st.cfg.max_grad_norm > 0.0 && info.grad_norm > st.cfg.max_grad_norm) gscale = st.cfg.max_grad_norm / info.grad_norm;

  const double t = static_cast<double>(st.step + 1);
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, t);
  const double decay = 1.0 - info.lr * st.cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k] * gscale;
      m[k] = st.cfg.beta1 * m[k] + (1.0 - st.cfg.beta1) * gk;
      v[k] = st.cfg.beta2 * v[k] + (1.0 - st.cfg.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] = p[k] * decay - info.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
    }
    if (!p.all_finite()) throw NumericError("non-finite parameter after update of tensor " + std::to_string(i));
  }
  ++st.step;
  return info;
}

StepInfo optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& st) {
  return optimizer_step(params.tensors(), grads.tensors(), st);
}

}  // namespace steprl::nn
