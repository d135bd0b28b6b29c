#include "steprl/nn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "steprl/common/rng.hpp"

namespace steprl::nn {

namespace {

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

RowVec layer_norm_row(const RowVec& x, const Tensor& g, const Tensor& b) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double is = 1.0 / std::sqrt(var + 1e-5);
  RowVec out(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c)
    out[c] = g[static_cast<std::size_t>(c)] * ((x[c] - mu) * is) + b[static_cast<std::size_t>(c)];
  return out;
}

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

}  // namespace

Decoder::Decoder(const ModelParams& p) : p_(p) { reset(); }

void Decoder::reset() {
  const auto L = static_cast<std::size_t>(p_.cfg.layers);
  kcache_.assign(L, RowMajorMat(p_.cfg.context, p_.cfg.d));
  vcache_.assign(L, RowMajorMat(p_.cfg.context, p_.cfg.d));
  hidden_.assign(static_cast<std::size_t>(p_.cfg.d), 0.0);
  len_ = 0;
}

const std::vector<double>& Decoder::push(int token) {
  const ModelConfig& c = p_.cfg;
  if (len_ >= c.context) throw std::invalid_argument("decoder: context length exceeded");
  if (token < 0 || token >= c.vocab) throw std::invalid_argument("decoder: token id " + std::to_string(token) + " outside vocabulary");
  const int t = len_;
  RowVec x = as_mat(p_.embed).row(token) + as_mat(p_.pos).row(t);
  const int dh = c.d / c.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < p_.blocks.size(); ++l) {
    const BlockParams& b = p_.blocks[l];
    RowVec h = layer_norm_row(x, b.ln1_g, b.ln1_b);
    RowVec q = h * as_mat(b.wq);
    kcache_[l].row(t) = h * as_mat(b.wk);
    vcache_[l].row(t) = h * as_mat(b.wv);
    RowVec a(c.d);
    for (int hd = 0; hd < c.heads; ++hd) {
      Eigen::VectorXd s = kcache_[l].block(0, hd * dh, t + 1, dh) * q.segment(hd * dh, dh).transpose() * inv_sqrt;
      const double mx = s.maxCoeff();
      s = (s.array() - mx).exp();
      s /= s.sum();
      a.segment(hd * dh, dh) = s.transpose() * vcache_[l].block(0, hd * dh, t + 1, dh);
    }
    x += a * as_mat(b.wo);
    h = layer_norm_row(x, b.ln2_g, b.ln2_b);
    RowVec f = h * as_mat(b.ff1_w) + as_mat(b.ff1_b);
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = gelu_scalar(f[i]);
    x += f * as_mat(b.ff2_w) + as_mat(b.ff2_b);
  }
  RowVec y = layer_norm_row(x, p_.lnf_g, p_.lnf_b);
  hidden_.assign(y.data(), y.data() + y.size());
  ++len_;
  return hidden_;
}

std::vector<double> Decoder::lm_logits() const {
  Eigen::Map<const RowVec> h(hidden_.data(), static_cast<Eigen::Index>(hidden_.size()));
  RowVec out = h * as_mat(p_.lm_w);
  return {out.data(), out.data() + out.size()};
}

double Decoder::value() const {
  Eigen::Map<const RowVec> h(hidden_.data(), static_cast<Eigen::Index>(hidden_.size()));
  return (h * as_mat(p_.value_w))(0, 0) + p_.value_b[0];
}

std::vector<double> Decoder::classifier_logits() const {
  Eigen::Map<const RowVec> h(hidden_.data(), static_cast<Eigen::Index>(hidden_.size()));
  RowVec out = h * as_mat(p_.cls_w) + as_mat(p_.cls_b);
  return {out[0], out[1]};
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : logits) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

int argmax(std::span<const double> xs) {
  int best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

SampleResult sample(const ModelParams& p, std::span<const int> prompt, const SampleOptions& opt) {
  if (prompt.empty()) throw std::invalid_argument("sample: empty prompt");
  if (opt.temperature < 0.0) throw std::invalid_argument("sample: negative temperature");
  check_tokens(p.cfg, prompt);
  Decoder dec(p);
  for (int t : prompt) dec.push(t);
  Rng rng(opt.seed);
  SampleResult out;
  for (int i = 0; i < opt.max_new && dec.length() < p.cfg.context; ++i) {
    const std::vector<double> logits = dec.lm_logits();
    const std::vector<double> lp = log_softmax(logits);
    int tok;
    if (opt.temperature == 0.0) {
      tok = argmax(logits);
    } else {
      std::vector<double> scaled(logits.size());
      for (std::size_t k = 0; k < logits.size(); ++k) scaled[k] = logits[k] / opt.temperature;
      const std::vector<double> lq = log_softmax(scaled);
      const double u = rng.uniform();
      double acc = 0.0;
      tok = static_cast<int>(lq.size()) - 1;
      for (std::size_t k = 0; k < lq.size(); ++k) {
        acc += std::exp(lq[k]);
        if (u < acc) {
          tok = static_cast<int>(k);
          break;
        }
      }
    }
    out.continuation.push_back(tok);
    out.logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
    if (tok == opt.eos_id) break;
    dec.push(tok);
  }
  return out;
}

}  // namespace steprl::nn
