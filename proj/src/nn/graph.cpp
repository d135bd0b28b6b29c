#include "steprl/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace steprl::nn {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + detail);
}

std::string shapes(const Tensor& a, const Tensor& b) { return a.shape_str() + " vs " + b.shape_str(); }

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor t) {
  Node n;
  n.own = std::move(t);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Tensor t) {
  Node n;
  n.own = std::move(t);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(const Tensor& value, Tensor* sink) {
  Node n;
  n.external = &value;
  n.sink = sink;
  n.requires_grad = sink != nullptr;
  if (sink) require(sink->same_shape(value), "parameter", "gradient sink " + shapes(*sink, value));
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value(); }

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.sink) return *n.sink;
  if (n.grad.data.empty()) return Tensor(n.value().rows, n.value().cols);
  return n.grad;
}

Tensor& Graph::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.sink) return *n.sink;
  if (n.grad.data.empty()) n.grad = Tensor(n.value().rows, n.value().cols);
  return n.grad;
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool rg = false;
  for (Var p : parents) rg = rg || nodes_[static_cast<std::size_t>(p.id)].requires_grad;
  Node n;
  n.own = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("backward: loss must be scalar, got " + lv.shape_str());
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[static_cast<std::size_t>(loss.id)].requires_grad) return;
  grad_ref(loss.id)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.data.empty()) continue;
    n.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols == B.rows, "matmul", shapes(A, B));
  Tensor out(A.rows, B.cols);
  as_mat(out).noalias() = as_mat(A) * as_mat(B);
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& dOut = g.grad_ref(self);
    if (g.needs(a)) as_mat(g.grad_ref(a.id)).noalias() += as_mat(dOut) * as_mat(g.value(b)).transpose();
    if (g.needs(b)) as_mat(g.grad_ref(b.id)).noalias() += as_mat(g.value(a)).transpose() * as_mat(dOut);
  });
}

Var add(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool broadcast = !A.same_shape(B);
  require(!broadcast || (B.rows == 1 && B.cols == A.cols), "add", shapes(A, B));
  Tensor out = A;
  if (broadcast) {
    for (int r = 0; r < A.rows; ++r)
      for (int c = 0; c < A.cols; ++c) out(r, c) += B[static_cast<std::size_t>(c)];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  }
  return g.record(std::move(out), {a, b}, [a, b, broadcast](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    if (g.needs(a)) accumulate(g.grad_ref(a.id), d);
    if (g.needs(b)) {
      Tensor& gb = g.grad_ref(b.id);
      if (broadcast) {
        for (int r = 0; r < d.rows; ++r)
          for (int c = 0; c < d.cols; ++c) gb[static_cast<std::size_t>(c)] += d(r, c);
      } else {
        accumulate(gb, d);
      }
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "sub", shapes(A, B));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    if (g.needs(a)) accumulate(g.grad_ref(a.id), d);
    if (g.needs(b)) {
      Tensor& gb = g.grad_ref(b.id);
      for (std::size_t i = 0; i < d.size(); ++i) gb[i] -= d[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "mul", shapes(A, B));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    if (g.needs(a)) {
      Tensor& ga = g.grad_ref(a.id);
      const Tensor& bv = g.value(b);
      for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * bv[i];
    }
    if (g.needs(b)) {
      Tensor& gb = g.grad_ref(b.id);
      const Tensor& av = g.value(a);
      for (std::size_t i = 0; i < d.size(); ++i) gb[i] += d[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& x : out.data) x *= s;
  return g.record(std::move(out), {a}, [a, s](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += s * d[i];
  });
}

Var add_scalar(Var a, double s) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& x : out.data) x += s;
  return g.record(std::move(out), {a}, [a](Graph& g, int self) { accumulate(g.grad_ref(a.id), g.grad_ref(self)); });
}

Var exp(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& x : out.data) x = std::exp(x);
  return g.record(std::move(out), {a}, [a](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    const Tensor& y = g.value({&g, self});
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * y[i];
  });
}

Var square(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& x : out.data) x *= x;
  return g.record(std::move(out), {a}, [a](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    const Tensor& x = g.value(a);
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += 2.0 * x[i] * d[i];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  auto th = std::make_shared<std::vector<double>>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = out[i];
    (*th)[i] = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    out[i] = 0.5 * x * (1.0 + (*th)[i]);
  }
  return g.record(std::move(out), {a}, [a, th](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    const Tensor& xv = g.value(a);
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x = xv[i];
      const double t = (*th)[i];
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      ga[i] += d[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Var clamp(Var a, double lo, double hi) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (double& x : out.data) x = std::clamp(x, lo, hi);
  return g.record(std::move(out), {a}, [a, lo, hi](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    const Tensor& x = g.value(a);
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) ga[i] += d[i];
  });
}

namespace {

// Elementwise selection; `pick_a(a, b)` decides which input the output copies.
template <typename Pick>
Var select(Var a, Var b, const char* name, Pick pick_a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), name, shapes(A, B));
  Tensor out(A.rows, A.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick_a(A[i], B[i]) ? A[i] : B[i];
  return g.record(std::move(out), {a, b}, [a, b, pick_a](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (pick_a(av[i], bv[i])) {
        if (g.needs(a)) g.grad_ref(a.id)[i] += d[i];
      } else if (g.needs(b)) {
        g.grad_ref(b.id)[i] += d[i];
      }
    }
  });
}

}  // namespace

Var minimum(Var a, Var b) {
  return select(a, b, "minimum", [](double x, double y) { return x <= y; });
}

Var maximum(Var a, Var b) {
  return select(a, b, "maximum", [](double x, double y) { return x >= y; });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  double s = 0.0;
  for (double x : a.value().data) s += x;
  return g.record(Tensor::scalar(s), {a}, [a](Graph& g, int self) {
    const double d = g.grad_ref(self)[0];
    for (double& x : g.grad_ref(a.id).data) x += d;
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  require(n > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var weighted_sum(Var a, const Tensor& weights) {
  Graph& g = *a.graph;
  require(a.value().same_shape(weights), "weighted_sum", shapes(a.value(), weights));
  double s = 0.0;
  const Tensor& A = a.value();
  for (std::size_t i = 0; i < A.size(); ++i) s += weights[i] * A[i];
  return g.record(Tensor::scalar(s), {a}, [a, weights](Graph& g, int self) {
    const double d = g.grad_ref(self)[0];
    Tensor& ga = g.grad_ref(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += d * weights[i];
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  const int T = X.rows;
  const int D = X.cols;
  require(gain.value().rows == 1 && gain.value().cols == D, "layer_norm", "gain " + shapes(gain.value(), X));
  require(bias.value().rows == 1 && bias.value().cols == D, "layer_norm", "bias " + shapes(bias.value(), X));
  Tensor xhat(T, D);
  std::vector<double> inv_std(static_cast<std::size_t>(T));
  Tensor out(T, D);
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  for (int r = 0; r < T; ++r) {
    double mu = 0.0;
    for (int c = 0; c < D; ++c) mu += X(r, c);
    mu /= D;
    double var = 0.0;
    for (int c = 0; c < D; ++c) var += (X(r, c) - mu) * (X(r, c) - mu);
    var /= D;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int c = 0; c < D; ++c) {
      xhat(r, c) = (X(r, c) - mu) * is;
      out(r, c) = G[static_cast<std::size_t>(c)] * xhat(r, c) + B[static_cast<std::size_t>(c)];
    }
  }
  auto saved = std::make_shared<std::pair<Tensor, std::vector<double>>>(std::move(xhat), std::move(inv_std));
  return g.record(std::move(out), {x, gain, bias}, [x, gain, bias, saved](Graph& g, int self) {
    const Tensor& dy = g.grad_ref(self);
    const Tensor& xh = saved->first;
    const Tensor& G = g.value(gain);
    const int T = dy.rows;
    const int D = dy.cols;
    if (g.needs(gain) || g.needs(bias)) {
      for (int r = 0; r < T; ++r)
        for (int c = 0; c < D; ++c) {
          if (g.needs(gain)) g.grad_ref(gain.id)[static_cast<std::size_t>(c)] += dy(r, c) * xh(r, c);
          if (g.needs(bias)) g.grad_ref(bias.id)[static_cast<std::size_t>(c)] += dy(r, c);
        }
    }
    if (g.needs(x)) {
      Tensor& gx = g.grad_ref(x.id);
      std::vector<double> dxh(static_cast<std::size_t>(D));
      for (int r = 0; r < T; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (int c = 0; c < D; ++c) {
          dxh[static_cast<std::size_t>(c)] = dy(r, c) * G[static_cast<std::size_t>(c)];
          m1 += dxh[static_cast<std::size_t>(c)];
          m2 += dxh[static_cast<std::size_t>(c)] * xh(r, c);
        }
        m1 /= D;
        m2 /= D;
        const double is = saved->second[static_cast<std::size_t>(r)];
        for (int c = 0; c < D; ++c) gx(r, c) += is * (dxh[static_cast<std::size_t>(c)] - m1 - xh(r, c) * m2);
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = *table.graph;
  const Tensor& W = table.value();
  Tensor out(static_cast<int>(ids.size()), W.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < W.rows, "embedding", "id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(&W.data[static_cast<std::size_t>(ids[i]) * static_cast<std::size_t>(W.cols)], W.cols,
                &out.data[i * static_cast<std::size_t>(W.cols)]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return g.record(std::move(out), {table}, [table, idv](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    Tensor& gw = g.grad_ref(table.id);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (int c = 0; c < d.cols; ++c) gw(idv[i], c) += d(static_cast<int>(i), c);
  });
}

Var slice_rows(Var x, int begin, int count) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  require(begin >= 0 && count >= 0 && begin + count <= X.rows, "slice_rows",
          std::to_string(begin) + "+" + std::to_string(count) + " of " + X.shape_str());
  Tensor out(count, X.cols);
  std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(begin) * X.cols, static_cast<std::ptrdiff_t>(count) * X.cols,
              out.data.begin());
  return g.record(std::move(out), {x}, [x, begin](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < d.size(); ++i) gx[static_cast<std::size_t>(begin) * static_cast<std::size_t>(d.cols) + i] += d[i];
  });
}

Var pick_rows(Var x, std::span<const int> rows) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  Tensor out(static_cast<int>(rows.size()), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < X.rows, "pick_rows", "row " + std::to_string(rows[i]) + " of " + X.shape_str());
    for (int c = 0; c < X.cols; ++c) out(static_cast<int>(i), c) = X(rows[i], c);
  }
  std::vector<int> rv(rows.begin(), rows.end());
  return g.record(std::move(out), {x}, [x, rv](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    Tensor& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < rv.size(); ++i)
      for (int c = 0; c < d.cols; ++c) gx(rv[i], c) += d(static_cast<int>(i), c);
  });
}

Var column(Var x, int c) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  require(c >= 0 && c < X.cols, "column", "column " + std::to_string(c) + " of " + X.shape_str());
  Tensor out(X.rows, 1);
  for (int r = 0; r < X.rows; ++r) out[static_cast<std::size_t>(r)] = X(r, c);
  return g.record(std::move(out), {x}, [x, c](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    Tensor& gx = g.grad_ref(x.id);
    for (int r = 0; r < d.rows; ++r) gx(r, c) += d[static_cast<std::size_t>(r)];
  });
}

Var gather_cols(Var x, std::span<const int> cols) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  require(static_cast<int>(cols.size()) == X.rows, "gather_cols", "need one column per row of " + X.shape_str());
  Tensor out(X.rows, 1);
  for (int r = 0; r < X.rows; ++r) {
    require(cols[static_cast<std::size_t>(r)] >= 0 && cols[static_cast<std::size_t>(r)] < X.cols, "gather_cols", "column out of range");
    out[static_cast<std::size_t>(r)] = X(r, cols[static_cast<std::size_t>(r)]);
  }
  std::vector<int> cv(cols.begin(), cols.end());
  return g.record(std::move(out), {x}, [x, cv](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    Tensor& gx = g.grad_ref(x.id);
    for (int r = 0; r < d.rows; ++r) gx(r, cv[static_cast<std::size_t>(r)]) += d[static_cast<std::size_t>(r)];
  });
}

Var log_softmax_rows(Var x) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  Tensor out(X.rows, X.cols);
  for (int r = 0; r < X.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < X.cols; ++c) mx = std::max(mx, X(r, c));
    double s = 0.0;
    for (int c = 0; c < X.cols; ++c) s += std::exp(X(r, c) - mx);
    const double lse = mx + std::log(s);
    for (int c = 0; c < X.cols; ++c) out(r, c) = X(r, c) - lse;
  }
  return g.record(std::move(out), {x}, [x](Graph& g, int self) {
    const Tensor& d = g.grad_ref(self);
    const Tensor& y = g.value({&g, self});
    Tensor& gx = g.grad_ref(x.id);
    for (int r = 0; r < d.rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < d.cols; ++c) s += d(r, c);
      for (int c = 0; c < d.cols; ++c) gx(r, c) += d(r, c) - std::exp(y(r, c)) * s;
    }
  });
}

Var causal_attention(Var q, Var k, Var v, int n_heads) {
  Graph& g = *q.graph;
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  require(Q.same_shape(K) && Q.same_shape(V), "causal_attention", shapes(Q, K));
  require(n_heads > 0 && Q.cols % n_heads == 0, "causal_attention", "head count must divide width");
  const int T = Q.rows;
  const int dh = Q.cols / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<RowMajorMat>>(static_cast<std::size_t>(n_heads));
  Tensor out(T, Q.cols);
  // Explicit loops over the causal triangle keep row i independent of later
  // positions bit for bit.
  for (int h = 0; h < n_heads; ++h) {
    const int off = h * dh;
    RowMajorMat S = RowMajorMat::Zero(T, T);
    for (int i = 0; i < T; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (int c = 0; c < dh; ++c) dot += Q(i, off + c) * K(j, off + c);
        S(i, j) = dot * inv_sqrt;
        mx = std::max(mx, S(i, j));
      }
      double s = 0.0;
      for (int j = 0; j <= i; ++j) {
        S(i, j) = std::exp(S(i, j) - mx);
        s += S(i, j);
      }
      for (int j = 0; j <= i; ++j) S(i, j) /= s;
      for (int j = 0; j <= i; ++j) {
        const double pij = S(i, j);
        for (int c = 0; c < dh; ++c) out(i, off + c) += pij * V(j, off + c);
      }
    }
    (*probs)[static_cast<std::size_t>(h)] = std::move(S);
  }
  return g.record(std::move(out), {q, k, v}, [q, k, v, n_heads, dh, inv_sqrt, probs](Graph& g, int self) {
    auto dO = as_mat(g.grad_ref(self));
    auto Qm = as_mat(g.value(q));
    auto Km = as_mat(g.value(k));
    auto Vm = as_mat(g.value(v));
    const int T = static_cast<int>(dO.rows());
    for (int h = 0; h < n_heads; ++h) {
      const RowMajorMat& P = (*probs)[static_cast<std::size_t>(h)];
      auto dOh = dO.middleCols(h * dh, dh);
      if (g.needs(v)) as_mat(g.grad_ref(v.id)).middleCols(h * dh, dh).noalias() += P.transpose() * dOh;
      if (!g.needs(q) && !g.needs(k)) continue;
      RowMajorMat dP = dOh * Vm.middleCols(h * dh, dh).transpose();
      for (int i = 0; i < T; ++i) {
        double dot = 0.0;
        for (int j = 0; j <= i; ++j) dot += dP(i, j) * P(i, j);
        for (int j = 0; j <= i; ++j) dP(i, j) = P(i, j) * (dP(i, j) - dot) * inv_sqrt;
        for (int j = i + 1; j < T; ++j) dP(i, j) = 0.0;
      }
      if (g.needs(q)) as_mat(g.grad_ref(q.id)).middleCols(h * dh, dh).noalias() += dP * Km.middleCols(h * dh, dh);
      if (g.needs(k)) as_mat(g.grad_ref(k.id)).middleCols(h * dh, dh).noalias() += dP.transpose() * Qm.middleCols(h * dh, dh);
    }
  });
}

}  // namespace steprl::nn
