#include "steprl/nn/model.hpp"

#include <cmath>

#include "steprl/common/rng.hpp"

namespace steprl::nn {

const char* head_name(Head h) {
  switch (h) {
    case Head::LM: return "lm";
    case Head::Value: return "value";
    case Head::Classifier: return "classifier";
  }
  return "?";
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab", c.vocab}, {"d", c.d}, {"layers", c.layers}, {"heads", c.heads}, {"context", c.context}, {"init_std", c.init_std}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab = j.value("vocab", c.vocab);
  c.d = j.value("d", c.d);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.context = j.value("context", c.context);
  c.init_std = j.value("init_std", c.init_std);
  if (c.vocab <= 0 || c.d <= 0 || c.layers < 0 || c.heads <= 0 || c.context <= 0 || c.d % c.heads != 0)
    throw std::invalid_argument("invalid model config: " + to_json(c).dump());
  return c;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out{&embed, &pos};
  for (auto& b : blocks)
    for (Tensor* t : {&b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_g, &b.ln2_b, &b.ff1_w, &b.ff1_b, &b.ff2_w, &b.ff2_b})
      out.push_back(t);
  for (Tensor* t : {&lnf_g, &lnf_b, &lm_w, &value_w, &value_b, &cls_w, &cls_b}) out.push_back(t);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out{"embed", "pos"};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    for (const char* n : {"ln1.g", "ln1.b", "wq", "wk", "wv", "wo", "ln2.g", "ln2.b", "ff1.w", "ff1.b", "ff2.w", "ff2.b"})
      out.push_back(pre + n);
  }
  for (const char* n : {"lnf.g", "lnf.b", "head.lm.w", "head.value.w", "head.value.b", "head.cls.w", "head.cls.b"})
    out.emplace_back(n);
  return out;
}

std::int64_t ModelParams::param_count() const {
  std::int64_t n = 0;
  for (const Tensor* t : tensors()) n += static_cast<std::int64_t>(t->size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : tensors())
    if (!t->all_finite()) return false;
  return true;
}

ModelParams zeros_like(const ModelConfig& c) {
  ModelParams p;
  p.cfg = c;
  p.embed = Tensor(c.vocab, c.d);
  p.pos = Tensor(c.context, c.d);
  for (int l = 0; l < c.layers; ++l) {
    BlockParams b;
    b.ln1_g = b.ln1_b = b.ln2_g = b.ln2_b = Tensor(1, c.d);
    b.wq = b.wk = b.wv = b.wo = Tensor(c.d, c.d);
    b.ff1_w = Tensor(c.d, 4 * c.d);
    b.ff1_b = Tensor(1, 4 * c.d);
    b.ff2_w = Tensor(4 * c.d, c.d);
    b.ff2_b = Tensor(1, c.d);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = p.lnf_b = Tensor(1, c.d);
  p.lm_w = Tensor(c.d, c.vocab);
  p.value_w = Tensor(c.d, 1);
  p.value_b = Tensor(1, 1);
  p.cls_w = Tensor(c.d, 2);
  p.cls_b = Tensor(1, 2);
  return p;
}

void zero_grads(ModelParams& grads) {
  for (Tensor* t : grads.tensors()) t->fill(0.0);
}

ModelParams init_model(const ModelConfig& c, std::uint64_t seed) {
  ModelParams p = zeros_like(c);
  Rng rng(derive_seed(seed, hash_tag("init_model")));
  auto gauss = [&](Tensor& t, double std) {
    for (double& x : t.data) x = std * rng.normal();
  };
  // Unit-scale token and position tables: with init_std-sized embeddings the
  // first LayerNorm sees mostly position and token identity is washed out.
  gauss(p.embed, 1.0);
  for (int t = 0; t < c.context; ++t)
    for (int i = 0; i < c.d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / c.d);
      p.pos(t, i) = i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
    }
  const double resid_std = c.init_std / std::sqrt(2.0 * std::max(1, c.layers));
  for (auto& b : p.blocks) {
    b.ln1_g.fill(1.0);
    b.ln2_g.fill(1.0);
    gauss(b.wq, c.init_std);
    gauss(b.wk, c.init_std);
    gauss(b.wv, c.init_std);
    gauss(b.wo, resid_std);
    gauss(b.ff1_w, c.init_std);
    gauss(b.ff2_w, resid_std);
  }
  p.lnf_g.fill(1.0);
  gauss(p.lm_w, c.init_std);
  return p;
}

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty sequence");
  if (static_cast<int>(tokens.size()) > cfg.context)
    throw std::invalid_argument("forward: sequence length " + std::to_string(tokens.size()) + " exceeds context " +
                                std::to_string(cfg.context));
  for (int t : tokens)
    if (t < 0 || t >= cfg.vocab) throw std::invalid_argument("forward: token id " + std::to_string(t) + " outside vocabulary");
}

Var forward(Graph& g, const ModelParams& p, ModelParams* grads, std::span<const int> tokens, Head head) {
  check_tokens(p.cfg, tokens);
  const int T = static_cast<int>(tokens.size());
  auto leaf = [&](const Tensor& t, Tensor* gt) { return g.parameter(t, grads ? gt : nullptr); };
  ModelParams* G = grads;
  auto gp = [&](Tensor ModelParams::*m) -> Tensor* { return G ? &(G->*m) : nullptr; };

  Var x = embedding(leaf(p.embed, gp(&ModelParams::embed)), tokens);
  x = add(x, slice_rows(leaf(p.pos, gp(&ModelParams::pos)), 0, T));
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const BlockParams& b = p.blocks[l];
    BlockParams* gb = G ? &G->blocks[l] : nullptr;
    auto bl = [&](const Tensor& t, Tensor BlockParams::*m) { return g.parameter(t, gb ? &(gb->*m) : nullptr); };

    Var h = layer_norm(x, bl(b.ln1_g, &BlockParams::ln1_g), bl(b.ln1_b, &BlockParams::ln1_b));
    Var q = matmul(h, bl(b.wq, &BlockParams::wq));
    Var k = matmul(h, bl(b.wk, &BlockParams::wk));
    Var v = matmul(h, bl(b.wv, &BlockParams::wv));
    Var a = causal_attention(q, k, v, p.cfg.heads);
    x = add(x, matmul(a, bl(b.wo, &BlockParams::wo)));

    h = layer_norm(x, bl(b.ln2_g, &BlockParams::ln2_g), bl(b.ln2_b, &BlockParams::ln2_b));
    h = gelu(add(matmul(h, bl(b.ff1_w, &BlockParams::ff1_w)), bl(b.ff1_b, &BlockParams::ff1_b)));
    h = add(matmul(h, bl(b.ff2_w, &BlockParams::ff2_w)), bl(b.ff2_b, &BlockParams::ff2_b));
    x = add(x, h);
  }
  x = layer_norm(x, leaf(p.lnf_g, gp(&ModelParams::lnf_g)), leaf(p.lnf_b, gp(&ModelParams::lnf_b)));

  switch (head) {
    case Head::LM:
      return matmul(x, leaf(p.lm_w, gp(&ModelParams::lm_w)));
    case Head::Value:
      return add(matmul(x, leaf(p.value_w, gp(&ModelParams::value_w))), leaf(p.value_b, gp(&ModelParams::value_b)));
    case Head::Classifier:
      return add(matmul(x, leaf(p.cls_w, gp(&ModelParams::cls_w))), leaf(p.cls_b, gp(&ModelParams::cls_b)));
  }
  throw std::invalid_argument("forward: unknown head");
}

Tensor infer(const ModelParams& p, std::span<const int> tokens, Head head) {
  Graph g;
  return forward(g, p, nullptr, tokens, head).value();
}

}  // namespace steprl::nn
