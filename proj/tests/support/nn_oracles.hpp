#pragma once

// Finite-difference and attention-invariant oracles shared by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cavmarl/nn/autodiff.hpp"
#include "cavmarl/nn/layers.hpp"
#include "cavmarl/sim/rng.hpp"

namespace cavmarl::testing {

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_rel = 0.0;
  std::string worst;
};

// Builds a scalar loss on a fresh tape; every Parameter it touches through a
// mutable reference receives gradient.
using LossFn = std::function<nn::Var(nn::Tape&)>;

inline double loss_value(const LossFn& f) {
  nn::Tape tape;
  return f(tape).value().item();
}

// Central differences with step h on every entry of every parameter. The
// relative error uses max(|analytic|, |numeric|, floor) as denominator so that
// entries whose true gradient is zero compare absolutely against the floor.
inline GradCheck grad_check(const std::vector<nn::Parameter*>& params, const LossFn& f, double h = 1e-5,
                            double tol = 1e-4, double floor = 1e-6) {
  for (nn::Parameter* p : params) p->grad() = nn::Tensor(p->value().shape(), 0.0);
  {
    nn::Tape tape;
    tape.backward(f(tape));
  }
  GradCheck out;
  for (nn::Parameter* p : params) {
    for (std::size_t i = 0; i < p->value().size(); ++i) {
      const double orig = p->value()[i];
      p->value()[i] = orig + h;
      const double up = loss_value(f);
      p->value()[i] = orig - h;
      const double down = loss_value(f);
      p->value()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad()[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++out.checked;
      if (!(rel < tol)) ++out.failures;
      if (!(rel <= out.max_rel)) {
        out.max_rel = rel;
        out.worst = p->name() + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

inline nn::Tensor random_tensor(nn::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(std::move(shape), 0.0);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// Values bounded away from zero so ReLU kinks stay outside the FD stencil.
inline nn::Tensor away_from_zero(nn::Shape shape, Rng& rng) {
  nn::Tensor t(std::move(shape), 0.0);
  for (double& v : t.values()) {
    const double mag = uniform(rng, 0.05, 1.0);
    v = uniform01(rng) < 0.5 ? -mag : mag;
  }
  return t;
}

// Reduces any output to a scalar with fixed random weights so that every
// output entry contributes a distinct gradient.
inline nn::Var weighted_sum(nn::Tape& tape, const nn::Var& y, const nn::Tensor& w) {
  return nn::sum(nn::mul(y, tape.constant(w)));
}

inline std::vector<std::uint8_t> random_mask(std::size_t batch, std::size_t n, Rng& rng) {
  std::vector<std::uint8_t> m(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      m[b * n + j] = uniform01(rng) < 0.7 ? 1 : 0;
      any = any || m[b * n + j];
    }
    if (!any) m[b * n + uniform_index(rng, n)] = 1;
  }
  return m;
}

// One random instance of a layer or op kind; returns the combined check.
inline GradCheck grad_check_instance(const std::string& kind, Rng& rng, double h = 1e-5, double tol = 1e-4) {
  using namespace nn;
  const auto check = [h, tol](const std::vector<Parameter*>& ps, const LossFn& f) { return grad_check(ps, f, h, tol); };
  const std::size_t rows = 1 + uniform_index(rng, 3);
  const std::size_t cols = 2 + uniform_index(rng, 4);

  if (kind == "linear") {
    Linear lin("lin", cols, 1 + uniform_index(rng, 4), rng);
    Parameter x("x", random_tensor({rows, cols}, rng));
    const Tensor w = random_tensor({rows, lin.out()}, rng);
    std::vector<Parameter*> ps{&x};
    lin.collect(ps);
    return check(ps, [&](Tape& t) { return weighted_sum(t, lin.forward(t, t.parameter(x)), w); });
  }
  if (kind == "mlp") {
    Mlp mlp("mlp", {cols, 6, 5, 3}, rng);
    // Random init can put a hidden unit right on a kink; shift inputs until
    // every pre-activation is clear of it.
    Parameter x("x", random_tensor({rows, cols}, rng));
    for (int tries = 0; tries < 100; ++tries) {
      Tape probe;
      Var h = probe.constant(x.value());
      bool clear = true;
      for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l) {
        h = std::as_const(mlp.layers[l]).forward(probe, h);
        for (double v : h.value().values()) clear = clear && std::abs(v) > 1e-3;
        h = relu(h);
      }
      if (clear) break;
      x.value() = random_tensor({rows, cols}, rng);
    }
    const Tensor w = random_tensor({rows, 3}, rng);
    std::vector<Parameter*> ps{&x};
    mlp.collect(ps);
    return check(ps, [&](Tape& t) { return weighted_sum(t, mlp.forward(t, t.parameter(x)), w); });
  }
  if (kind == "attention") {
    const std::size_t n = 1 + uniform_index(rng, 5);
    AttentionParams p("att", 2, cols, 3, 3, 4, rng);
    Parameter q("q", random_tensor({rows, cols}, rng));
    Parameter kv("kv", random_tensor({rows * n, cols}, rng));
    const auto mask = random_mask(rows, n, rng);
    const Tensor w = random_tensor({rows, 4}, rng);
    std::vector<Parameter*> ps{&q, &kv};
    p.collect(ps);
    return check(ps, [&](Tape& t) {
      return weighted_sum(t, multi_head_attention(t, p, t.parameter(q), t.parameter(kv), mask, n).context, w);
    });
  }
  if (kind == "softmax") {
    const int axis = uniform01(rng) < 0.5 ? 0 : 1;
    Parameter x("x", random_tensor({rows + 1, cols}, rng, -3.0, 3.0));
    const Tensor w = random_tensor({rows + 1, cols}, rng);
    return check({&x}, [&](Tape& t) { return weighted_sum(t, softmax(t.parameter(x), axis), w); });
  }
  if (kind == "masked_softmax") {
    Parameter x("x", random_tensor({rows, cols}, rng, -3.0, 3.0));
    const auto mask = random_mask(rows, cols, rng);
    const Tensor w = random_tensor({rows, cols}, rng);
    return check({&x}, [&](Tape& t) { return weighted_sum(t, softmax(apply_mask(t.parameter(x), mask), 1), w); });
  }
  if (kind == "gumbel_softmax") {
    Parameter x("x", random_tensor({rows, cols}, rng, -2.0, 2.0));
    Tensor noise({rows, cols}, 0.0);
    for (double& g : noise.values()) g = gumbel(rng);
    const double temp = uniform(rng, 0.5, 2.0);
    const Tensor w = random_tensor({rows, cols}, rng);
    return check({&x}, [&](Tape& t) {
      return weighted_sum(t, gumbel_softmax_with_noise(t.parameter(x), noise, temp).soft, w);
    });
  }
  if (kind == "matmul") {
    const std::size_t inner = 1 + uniform_index(rng, 4);
    Parameter a("a", random_tensor({rows, inner}, rng));
    Parameter b("b", random_tensor({inner, cols}, rng));
    const Tensor w = random_tensor({rows, cols}, rng);
    return check({&a, &b}, [&](Tape& t) { return weighted_sum(t, matmul(t.parameter(a), t.parameter(b)), w); });
  }
  if (kind == "elementwise") {
    // add, sub, mul, scale and square in one expression.
    Parameter a("a", random_tensor({rows, cols}, rng));
    Parameter b("b", random_tensor({rows, cols}, rng));
    const double c = uniform(rng, -2.0, 2.0);
    const Tensor w = random_tensor({rows, cols}, rng);
    return check({&a, &b}, [&](Tape& t) {
      Var x = t.parameter(a), y = t.parameter(b);
      return weighted_sum(t, add(mul(x, y), scale(square(sub(x, y)), c)), w);
    });
  }
  if (kind == "add_bias") {
    Parameter x("x", random_tensor({rows, cols}, rng));
    Parameter b("b", random_tensor({cols}, rng));
    const Tensor w = random_tensor({rows, cols}, rng);
    return check({&x, &b}, [&](Tape& t) { return weighted_sum(t, add_bias(t.parameter(x), t.parameter(b)), w); });
  }
  if (kind == "relu") {
    Parameter x("x", away_from_zero({rows, cols}, rng));
    const Tensor w = random_tensor({rows, cols}, rng);
    return check({&x}, [&](Tape& t) { return weighted_sum(t, relu(t.parameter(x)), w); });
  }
  if (kind == "reductions") {
    Parameter x("x", random_tensor({rows, cols}, rng));
    return check({&x}, [&](Tape& t) {
      Var v = t.parameter(x);
      return add(scale(sum(square(v)), 0.5), mean(v));
    });
  }
  if (kind == "concat_select") {
    Parameter a("a", random_tensor({rows + 1, 2}, rng));
    Parameter b("b", random_tensor({rows + 1, cols}, rng));
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; i < rows + 2; ++i) pick.push_back(uniform_index(rng, rows + 1));
    const Tensor w = random_tensor({pick.size(), 2 + cols}, rng);
    return check({&a, &b}, [&](Tape& t) {
      const Var parts[] = {t.parameter(a), t.parameter(b)};
      return weighted_sum(t, select_rows(concat_cols(parts), pick), w);
    });
  }
  if (kind == "group_ops") {
    const std::size_t n = 1 + uniform_index(rng, 4);
    Parameter q("q", random_tensor({rows, cols}, rng));
    Parameter k("k", random_tensor({rows * n, cols}, rng));
    Parameter v("v", random_tensor({rows * n, 3}, rng));
    const double c = uniform(rng, 0.1, 1.0);
    const Tensor w = random_tensor({rows, 3}, rng);
    return check({&q, &k, &v}, [&](Tape& t) {
      Var s = group_scores(t.parameter(q), t.parameter(k), n, c);
      return weighted_sum(t, group_pool(s, t.parameter(v), n), w);
    });
  }
  throw std::invalid_argument("unknown grad-check kind " + kind);
}

inline const std::vector<std::string>& grad_check_kinds() {
  static const std::vector<std::string> kinds{"linear",     "mlp",     "attention",   "softmax", "masked_softmax",
                                              "gumbel_softmax", "matmul", "elementwise", "add_bias", "relu",
                                              "reductions", "concat_select", "group_ops"};
  return kinds;
}

// ---------------------------------------------------------------------------
// Attention invariants on random single-query instances.

struct AttentionCase {
  nn::AttentionParams params;
  nn::Tensor query;  // 1 x d
  nn::Tensor kv;     // n x d
  std::vector<std::uint8_t> mask;
  std::size_t n = 0;
};

inline AttentionCase random_attention_case(Rng& rng, std::size_t d_model = 6) {
  AttentionCase c;
  c.n = 1 + uniform_index(rng, 8);
  c.params = nn::AttentionParams("att", 2, d_model, 4, 4, 5, rng);
  c.query = random_tensor({1, d_model}, rng, -2.0, 2.0);
  c.kv = random_tensor({c.n, d_model}, rng, -2.0, 2.0);
  c.mask = random_mask(1, c.n, rng);
  return c;
}

struct AttentionOut {
  nn::Tensor context;
  std::vector<nn::Tensor> head_weights;
  nn::Tensor combined;
};

inline AttentionOut run_attention(const AttentionCase& c, const nn::Tensor& kv, const std::vector<std::uint8_t>& mask) {
  nn::Tape tape;
  const auto r = nn::multi_head_attention(tape, c.params, tape.constant(c.query), tape.constant(kv), mask, c.n);
  AttentionOut out{r.context.value(), {}, r.combined};
  for (const auto& w : r.head_weights) out.head_weights.push_back(w.value());
  return out;
}

inline double max_abs_diff(const nn::Tensor& a, const nn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Largest |sum of weights - 1| over heads and the combined vector.
inline double attention_sum_error(const AttentionCase& c) {
  const AttentionOut o = run_attention(c, c.kv, c.mask);
  double worst = 0.0;
  auto check = [&](const nn::Tensor& w) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.n; ++j) {
      if (w[j] < 0.0) worst = std::max(worst, 1.0);
      if (!c.mask[j] && w[j] != 0.0) worst = std::max(worst, 1.0);
      s += w[j];
    }
    worst = std::max(worst, std::abs(s - 1.0));
  };
  for (const auto& w : o.head_weights) check(w);
  check(o.combined);
  return worst;
}

// Largest deviation after permuting kv rows and mask together: weights must
// permute identically and the context must not change.
inline double attention_permutation_error(const AttentionCase& c, Rng& rng) {
  std::vector<std::size_t> perm(c.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = c.n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  nn::Tensor kv2 = c.kv;
  std::vector<std::uint8_t> mask2(c.n);
  const std::size_t d = c.kv.cols();
  for (std::size_t j = 0; j < c.n; ++j) {
    for (std::size_t f = 0; f < d; ++f) kv2(j, f) = c.kv(perm[j], f);
    mask2[j] = c.mask[perm[j]];
  }
  const AttentionOut a = run_attention(c, c.kv, c.mask);
  const AttentionOut b = run_attention(c, kv2, mask2);
  double worst = max_abs_diff(a.context, b.context);
  for (std::size_t h = 0; h < a.head_weights.size(); ++h) {
    for (std::size_t j = 0; j < c.n; ++j) {
      worst = std::max(worst, std::abs(b.head_weights[h][j] - a.head_weights[h][perm[j]]));
    }
  }
  return worst;
}

// Largest context change after overwriting every masked row with noise.
// Cases without a masked row are given one by appending a masked row.
inline double attention_mask_leak(AttentionCase c, Rng& rng) {
  if (std::all_of(c.mask.begin(), c.mask.end(), [](std::uint8_t m) { return m != 0; })) {
    const std::size_t d = c.kv.cols();
    nn::Tensor kv({c.n + 1, d}, 0.0);
    for (std::size_t j = 0; j < c.n; ++j)
      for (std::size_t f = 0; f < d; ++f) kv(j, f) = c.kv(j, f);
    c.kv = kv;
    c.mask.push_back(0);
    ++c.n;
  }
  const AttentionOut a = run_attention(c, c.kv, c.mask);
  nn::Tensor kv2 = c.kv;
  for (std::size_t j = 0; j < c.n; ++j) {
    if (c.mask[j]) continue;
    for (std::size_t f = 0; f < kv2.cols(); ++f) kv2(j, f) = uniform(rng, -50.0, 50.0);
  }
  const AttentionOut b = run_attention(c, kv2, c.mask);
  double worst = max_abs_diff(a.context, b.context);
  for (std::size_t h = 0; h < a.head_weights.size(); ++h) worst = std::max(worst, max_abs_diff(a.head_weights[h], b.head_weights[h]));
  return worst;
}

}  // namespace cavmarl::testing
