#include "cavmarl/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cavmarl::nn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void same_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw ShapeError(std::string(op) + ": invalid variable");
  if (&a.tape() != &b.tape()) throw ShapeError(std::string(op) + ": operands recorded on different tapes");
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename F>
Var elementwise_unary(const Var& a, Tensor out, F local_grad) {
  Tape& tape = a.tape();
  const int ia = a.index();
  return tape.record(std::move(out), {ia}, [ia, local_grad](Tape& t, int self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& g = t.grad_of(self);
    const Tensor& x = t.value_of(ia);
    const Tensor& y = t.value_of(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * local_grad(x[i], y[i]);
  });
}

}  // namespace

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape(), 0.0) {}

const Tensor& Var::value() const { return tape().value_of(index_); }
const Tensor& Var::grad() const { return tape().grad_of(index_); }

Tape& Var::tape() const {
  if (!tape_) throw ShapeError("Var: not attached to a tape");
  return *tape_;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value();
  n.param = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(const Parameter& p) {
  Node n;
  n.external = &p.value();
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor value, std::vector<int> parents, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(p)].needs_grad;
  n.parents = std::move(parents);
  if (n.needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Tape::value_of(int idx) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(idx));
  return n.external ? *n.external : n.value;
}

Tensor* Tape::grad_sink(int idx) {
  Node& n = nodes_[static_cast<std::size_t>(idx)];
  return n.needs_grad ? &n.grad : nullptr;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ShapeError("backward: loss belongs to another tape");
  const int root = loss.index();
  if (value_of(root).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(value_of(root).shape()));
  }
  for (std::size_t i = 0; i <= static_cast<std::size_t>(root); ++i) {
    Node& n = nodes_[i];
    if (n.needs_grad) n.grad = Tensor(value_of(static_cast<int>(i)).shape(), 0.0);
  }
  if (!nodes_[static_cast<std::size_t>(root)].needs_grad) return;
  nodes_[static_cast<std::size_t>(root)].grad[0] = 1.0;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad) continue;
    if (n.backprop) n.backprop(*this, i);
    if (n.param) {
      Tensor& pg = n.param->grad();
      if (pg.size() != n.grad.size()) pg = Tensor(n.grad.shape(), 0.0);
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  }
  Tensor C({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.data()[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const int ia = a.index(), ib = b.index();
  return a.tape().record(std::move(C), {ia, ib}, [ia, ib, m, k, n](Tape& t, int self) {
    const Tensor& G = t.grad_of(self);
    const Tensor& A = t.value_of(ia);
    const Tensor& B = t.value_of(ib);
    if (Tensor* gA = t.grad_sink(ia)) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          gA->data()[i * k + p] += acc;
        }
      }
    }
    if (Tensor* gB = t.grad_sink(ib)) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A.data()[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gB->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b, "add");
  same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    for (int p : {ia, ib}) {
      if (Tensor* gp = t.grad_sink(p)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gp)[i] += g[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b, "sub");
  same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (Tensor* ga = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b, "mul");
  same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& av = t.value_of(ia);
    const Tensor& bv = t.value_of(ib);
    if (Tensor* ga = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var add_bias(const Var& x, const Var& b) {
  same_tape(x, b, "add_bias");
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  const std::size_t m = X.rows(), n = X.cols();
  if (B.size() != n) {
    throw ShapeError("add_bias: bias " + shape_string(B.shape()) + " does not match columns of " +
                     shape_string(X.shape()));
  }
  Tensor out = X;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] += B[j];
  }
  const int ix = x.index(), ib = b.index();
  return x.tape().record(std::move(out), {ix, ib}, [ix, ib, m, n](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (Tensor* gx = t.grad_sink(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }
    if (Tensor* gb = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g.data()[i * n + j];
      }
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  return elementwise_unary(a, std::move(out), [c](double, double) { return c; });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return elementwise_unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var square(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v * v;
  return elementwise_unary(a, std::move(out), [](double x, double) { return 2.0 * x; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const int ia = a.index();
  return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape& t, int self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const double g = t.grad_of(self)[0];
    for (double& v : ga->values()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var softmax(const Var& a, int axis) {
  const Tensor& X = a.value();
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  if (X.rank() > 2 || X.size() == 0) throw ShapeError("softmax: expected rank 1 or 2, got " + shape_string(X.shape()));
  const std::size_t m = X.rows(), n = X.cols();
  // Slices: count, length, element stride, slice stride.
  const bool rows = axis == 1 || X.rank() == 1;
  const std::size_t count = rows ? m : n;
  const std::size_t len = rows ? n : m;
  const std::size_t stride = rows ? 1 : n;
  const std::size_t step = rows ? n : 1;
  Tensor Y(X.shape(), 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    const double* x = X.data() + s * step;
    double* y = Y.data() + s * step;
    double mx = kNegInf;
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[i * stride]);
    if (mx == kNegInf) throw ShapeError("softmax: every entry of a slice is -inf");
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = x[i * stride] == kNegInf ? 0.0 : std::exp(x[i * stride] - mx);
      y[i * stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) y[i * stride] /= z;
  }
  const int ia = a.index();
  return a.tape().record(std::move(Y), {ia}, [ia, count, len, stride, step](Tape& t, int self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& G = t.grad_of(self);
    const Tensor& Y = t.value_of(self);
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t base = s * step;
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += G[base + i * stride] * Y[base + i * stride];
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = base + i * stride;
        (*ga)[k] += Y[k] * (G[k] - dot);
      }
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& tape = parts[0].tape();
  const std::size_t m = parts[0].value().rows();
  std::vector<int> idx;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.value().rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    idx.push_back(p.index());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({m, total}, 0.0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(v.data() + i * widths[k], widths[k], out.data() + i * total + off);
    }
    off += widths[k];
  }
  std::vector<int> parents = idx;
  return tape.record(std::move(out), std::move(parents), [idx, widths, m, total](Tape& t, int self) {
    const Tensor& G = t.grad_of(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (Tensor* gp = t.grad_sink(idx[k])) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) gp->data()[i * widths[k] + j] += G.data()[i * total + off + j];
        }
      }
      off += widths[k];
    }
  });
}

Var select_rows(const Var& a, std::span<const std::size_t> rows) {
  const Tensor& X = a.value();
  const std::size_t n = X.cols();
  std::vector<std::size_t> sel(rows.begin(), rows.end());
  Tensor out({sel.size(), n}, 0.0);
  for (std::size_t r = 0; r < sel.size(); ++r) {
    if (sel[r] >= X.rows()) throw ShapeError("select_rows: row " + std::to_string(sel[r]) + " out of range");
    std::copy_n(X.data() + sel[r] * n, n, out.data() + r * n);
  }
  const int ia = a.index();
  return a.tape().record(std::move(out), {ia}, [ia, sel, n](Tape& t, int self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& G = t.grad_of(self);
    for (std::size_t r = 0; r < sel.size(); ++r) {
      for (std::size_t j = 0; j < n; ++j) ga->data()[sel[r] * n + j] += G.data()[r * n + j];
    }
  });
}

Var apply_mask(const Var& logits, std::span<const std::uint8_t> mask) {
  const Tensor& X = logits.value();
  const bool per_row = mask.size() == X.cols() && mask.size() != X.size();
  if (mask.size() != X.size() && !per_row) {
    throw ShapeError("apply_mask: mask length " + std::to_string(mask.size()) + " does not fit " +
                     shape_string(X.shape()));
  }
  std::vector<std::uint8_t> full(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) full[i] = per_row ? mask[i % X.cols()] : mask[i];
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!full[i]) out[i] = kNegInf;
  }
  const int ia = logits.index();
  return logits.tape().record(std::move(out), {ia}, [ia, full](Tape& t, int self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& G = t.grad_of(self);
    for (std::size_t i = 0; i < G.size(); ++i) {
      if (full[i]) (*ga)[i] += G[i];
    }
  });
}

Var group_scores(const Var& q, const Var& k, std::size_t n, double c) {
  same_tape(q, k, "group_scores");
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const std::size_t B = Q.rows(), d = Q.cols();
  if (K.cols() != d || K.rows() != B * n) {
    throw ShapeError("group_scores: keys " + shape_string(K.shape()) + " incompatible with queries " +
                     shape_string(Q.shape()) + " and group size " + std::to_string(n));
  }
  Tensor S({B, n}, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t e = 0; e < d; ++e) acc += Q.data()[b * d + e] * K.data()[(b * n + j) * d + e];
      S.data()[b * n + j] = c * acc;
    }
  }
  const int iq = q.index(), ik = k.index();
  return q.tape().record(std::move(S), {iq, ik}, [iq, ik, B, n, d, c](Tape& t, int self) {
    const Tensor& G = t.grad_of(self);
    const Tensor& Q = t.value_of(iq);
    const Tensor& K = t.value_of(ik);
    Tensor* gq = t.grad_sink(iq);
    Tensor* gk = t.grad_sink(ik);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = c * G.data()[b * n + j];
        if (g == 0.0) continue;
        for (std::size_t e = 0; e < d; ++e) {
          if (gq) gq->data()[b * d + e] += g * K.data()[(b * n + j) * d + e];
          if (gk) gk->data()[(b * n + j) * d + e] += g * Q.data()[b * d + e];
        }
      }
    }
  });
}

Var group_pool(const Var& w, const Var& v, std::size_t n) {
  same_tape(w, v, "group_pool");
  const Tensor& W = w.value();
  const Tensor& V = v.value();
  const std::size_t B = W.rows(), d = V.cols();
  if (W.cols() != n || V.rows() != B * n) {
    throw ShapeError("group_pool: weights " + shape_string(W.shape()) + " incompatible with values " +
                     shape_string(V.shape()) + " and group size " + std::to_string(n));
  }
  Tensor out({B, d}, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      const double wj = W.data()[b * n + j];
      if (wj == 0.0) continue;
      for (std::size_t e = 0; e < d; ++e) out.data()[b * d + e] += wj * V.data()[(b * n + j) * d + e];
    }
  }
  const int iw = w.index(), iv = v.index();
  return w.tape().record(std::move(out), {iw, iv}, [iw, iv, B, n, d](Tape& t, int self) {
    const Tensor& G = t.grad_of(self);
    const Tensor& W = t.value_of(iw);
    const Tensor& V = t.value_of(iv);
    Tensor* gw = t.grad_sink(iw);
    Tensor* gv = t.grad_sink(iv);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < n; ++j) {
        const double wj = W.data()[b * n + j];
        double acc = 0.0;
        for (std::size_t e = 0; e < d; ++e) {
          const double g = G.data()[b * d + e];
          acc += g * V.data()[(b * n + j) * d + e];
          if (gv) gv->data()[(b * n + j) * d + e] += wj * g;
        }
        if (gw) gw->data()[b * n + j] += acc;
      }
    }
  });
}

std::vector<int> argmax_rows(const Tensor& t) {
  const std::size_t m = t.rows(), n = t.cols();
  std::vector<int> out(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = t.data() + i * n;
    out[i] = static_cast<int>(std::max_element(row, row + n) - row);
  }
  return out;
}

Var straight_through(const Var& soft) {
  const Tensor& S = soft.value();
  Tensor hard(S.shape(), 0.0);
  const std::size_t n = S.cols();
  const std::vector<int> am = argmax_rows(S);
  for (std::size_t i = 0; i < am.size(); ++i) hard.data()[i * n + static_cast<std::size_t>(am[i])] = 1.0;
  return elementwise_unary(soft, std::move(hard), [](double, double) { return 1.0; });
}

GumbelSample gumbel_softmax_with_noise(const Var& logits, const Tensor& noise, double temperature) {
  if (!(temperature > 0.0)) throw ShapeError("gumbel_softmax: temperature must be positive");
  same_shape(logits.value(), noise, "gumbel_softmax");
  Tape& tape = logits.tape();
  GumbelSample out;
  out.noise = noise;
  Var perturbed = add(logits, tape.constant(noise));
  out.soft = softmax(scale(perturbed, 1.0 / temperature), 1);
  out.hard = straight_through(out.soft);
  out.argmax = argmax_rows(perturbed.value());
  return out;
}

GumbelSample gumbel_softmax_sample(const Var& logits, double temperature, Rng& rng) {
  Tensor noise(logits.value().shape(), 0.0);
  for (double& g : noise.values()) g = gumbel(rng);
  return gumbel_softmax_with_noise(logits, noise, temperature);
}

}  // namespace cavmarl::nn
