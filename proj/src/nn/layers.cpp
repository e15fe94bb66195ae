#include "cavmarl/nn/layers.hpp"

#include <cmath>

namespace cavmarl::nn {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.values()) v = uniform(rng, -bound, bound);
  return t;
}

template <typename L>
Var linear_forward(L& layer, Tape& tape, const Var& x) {
  if (x.value().cols() != layer.in()) {
    throw ShapeError("Linear " + layer.weight.name() + ": input has " + std::to_string(x.value().cols()) +
                     " columns, expected " + std::to_string(layer.in()));
  }
  return add_bias(matmul(x, tape.parameter(layer.weight)), tape.parameter(layer.bias));
}

template <typename M>
Var mlp_forward(M& mlp, Tape& tape, const Var& x) {
  if (mlp.layers.empty()) throw ShapeError("Mlp: no layers");
  Var h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = mlp.layers[i].forward(tape, h);
    if (i + 1 < mlp.layers.size()) h = relu(h);
  }
  return h;
}

template <typename P>
AttentionResult attention_forward(Tape& tape, P& p, const Var& query, const Var& kv,
                                  std::span<const std::uint8_t> mask, std::size_t n) {
  const std::size_t batch = query.value().rows();
  if (n == 0) throw ShapeError("multi_head_attention: no key rows");
  if (kv.value().rows() != batch * n || mask.size() != batch * n) {
    throw ShapeError("multi_head_attention: expected " + std::to_string(batch * n) + " key rows and mask bits, got " +
                     std::to_string(kv.value().rows()) + " and " + std::to_string(mask.size()));
  }
  if (query.value().cols() != p.d_model() || kv.value().cols() != p.d_model()) {
    throw ShapeError("multi_head_attention: feature width mismatch, expected " + std::to_string(p.d_model()));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || mask[b * n + j];
    if (!any) throw ShapeError("multi_head_attention: sample " + std::to_string(b) + " has no attendable row");
  }
  const double c = 1.0 / std::sqrt(static_cast<double>(p.d_k()));
  AttentionResult res;
  res.combined = Tensor({batch, n}, 0.0);
  Var summed;
  for (std::size_t h = 0; h < p.heads(); ++h) {
    Var q = matmul(query, tape.parameter(p.wq[h]));
    Var k = matmul(kv, tape.parameter(p.wk[h]));
    Var v = matmul(kv, tape.parameter(p.wv[h]));
    Var w = softmax(apply_mask(group_scores(q, k, n, c), mask), 1);
    Var head = group_pool(w, v, n);
    summed = h == 0 ? head : add(summed, head);
    const Tensor& wv = w.value();
    for (std::size_t i = 0; i < wv.size(); ++i) res.combined[i] += wv[i];
    res.head_weights.push_back(w);
  }
  for (double& x : res.combined.values()) x /= static_cast<double>(p.heads());
  res.context = p.out.forward(tape, summed);
  return res;
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter(name + ".weight", uniform_tensor({in, out}, bound, rng));
  bias = Parameter(name + ".bias", uniform_tensor({out}, bound, rng));
}

Var Linear::forward(Tape& tape, const Var& x) { return linear_forward(*this, tape, x); }
Var Linear::forward(Tape& tape, const Var& x) const { return linear_forward(*this, tape, x); }

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Linear::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&weight);
  out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw ShapeError("Mlp " + name + ": need at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng);
  }
}

Var Mlp::forward(Tape& tape, const Var& x) { return mlp_forward(*this, tape, x); }
Var Mlp::forward(Tape& tape, const Var& x) const { return mlp_forward(*this, tape, x); }

void Mlp::collect(std::vector<Parameter*>& out) {
  for (Linear& l : layers) l.collect(out);
}

void Mlp::collect(std::vector<const Parameter*>& out) const {
  for (const Linear& l : layers) l.collect(out);
}

AttentionParams::AttentionParams(const std::string& name, std::size_t heads, std::size_t d_model, std::size_t d_k,
                                 std::size_t d_v, std::size_t d_out, Rng& rng) {
  if (heads == 0) throw ShapeError("AttentionParams: need at least one head");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string prefix = name + ".head" + std::to_string(h);
    wq.emplace_back(prefix + ".wq", uniform_tensor({d_model, d_k}, bound, rng));
    wk.emplace_back(prefix + ".wk", uniform_tensor({d_model, d_k}, bound, rng));
    wv.emplace_back(prefix + ".wv", uniform_tensor({d_model, d_v}, bound, rng));
  }
  out = Linear(name + ".out", d_v, d_out, rng);
}

void AttentionParams::collect(std::vector<Parameter*>& dst) {
  for (std::size_t h = 0; h < heads(); ++h) {
    dst.push_back(&wq[h]);
    dst.push_back(&wk[h]);
    dst.push_back(&wv[h]);
  }
  out.collect(dst);
}

void AttentionParams::collect(std::vector<const Parameter*>& dst) const {
  for (std::size_t h = 0; h < heads(); ++h) {
    dst.push_back(&wq[h]);
    dst.push_back(&wk[h]);
    dst.push_back(&wv[h]);
  }
  out.collect(dst);
}

AttentionResult multi_head_attention(Tape& tape, AttentionParams& p, const Var& query, const Var& kv,
                                     std::span<const std::uint8_t> mask, std::size_t n) {
  return attention_forward(tape, p, query, kv, mask, n);
}

AttentionResult multi_head_attention(Tape& tape, const AttentionParams& p, const Var& query, const Var& kv,
                                     std::span<const std::uint8_t> mask, std::size_t n) {
  return attention_forward(tape, p, query, kv, mask, n);
}

}  // namespace cavmarl::nn
