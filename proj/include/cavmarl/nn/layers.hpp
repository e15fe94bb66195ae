#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cavmarl/nn/autodiff.hpp"

namespace cavmarl::nn {

// Layers bind their parameters as trainable when used through a non-const
// reference and as frozen leaves when used through a const one.

/// y = x W + b with W of shape in x out.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in() const { return weight.value().rows(); }
  std::size_t out() const { return weight.value().cols(); }

  Var forward(Tape& tape, const Var& x);
  Var forward(Tape& tape, const Var& x) const;

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

/// Fully connected stack with ReLU between layers and a linear output.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(const std::string& name, const std::vector<std::size_t>& sizes, Rng& rng);

  std::size_t in() const { return layers.front().in(); }
  std::size_t out() const { return layers.back().out(); }

  Var forward(Tape& tape, const Var& x);
  Var forward(Tape& tape, const Var& x) const;

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

/// Multi-head scaled dot-product attention with one query per sample.
struct AttentionParams {
  std::vector<Parameter> wq;  // per head, d_model x d_k
  std::vector<Parameter> wk;
  std::vector<Parameter> wv;  // per head, d_model x d_v
  Linear out;                 // d_v -> d_out, applied to the summed heads

  AttentionParams() = default;
  AttentionParams(const std::string& name, std::size_t heads, std::size_t d_model, std::size_t d_k,
                  std::size_t d_v, std::size_t d_out, Rng& rng);

  std::size_t heads() const { return wq.size(); }
  std::size_t d_model() const { return wq.front().value().rows(); }
  std::size_t d_k() const { return wq.front().value().cols(); }
  std::size_t d_v() const { return wv.front().value().cols(); }

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

struct AttentionResult {
  Var context;                     // B x d_out
  std::vector<Var> head_weights;   // per head, B x N softmax rows
  Tensor combined;                 // B x N, mean over heads
};

/// query: B x d_model, keys/values: (B*n) x d_model grouped per sample,
/// mask: B*n presence bits. Every sample needs at least one present row.
AttentionResult multi_head_attention(Tape& tape, AttentionParams& p, const Var& query, const Var& kv,
                                     std::span<const std::uint8_t> mask, std::size_t n);
AttentionResult multi_head_attention(Tape& tape, const AttentionParams& p, const Var& query, const Var& kv,
                                     std::span<const std::uint8_t> mask, std::size_t n);

}  // namespace cavmarl::nn
