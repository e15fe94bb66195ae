#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavmarl/nn/tensor.hpp"
#include "cavmarl/sim/rng.hpp"

namespace cavmarl::nn {

/// Raised for shape mismatches and other misuse of the tensor operations.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A trainable tensor with its gradient accumulator.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }
  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const;
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
};

/// Records a computation for reverse-mode differentiation. A tape is owned by
/// one thread; parameters referenced by it must outlive it.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Trainable leaf: backward() accumulates into p.grad().
  Var parameter(Parameter& p);
  /// Read-only leaf referencing p's value; receives no gradient.
  Var parameter(const Parameter& p);

  /// Reverse pass from a scalar. Intermediate gradients are recomputed on each
  /// call and added to the parameters' accumulators.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  // Interface for operation implementations.
  Var record(Tensor value, std::vector<int> parents, Backprop backprop);
  const Tensor& value_of(int idx) const;
  const Tensor& grad_of(int idx) const { return nodes_[static_cast<std::size_t>(idx)].grad; }
  /// Gradient buffer of a parent, or nullptr when it needs none.
  Tensor* grad_sink(int idx);
  bool needs_grad(int idx) const { return nodes_[static_cast<std::size_t>(idx)].needs_grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    std::vector<int> parents;
    Backprop backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;  // stable addresses while recording
};

// ---------------------------------------------------------------------------
// Operations. Binary operations require operands from the same tape.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x (m x n) plus a row vector b (1 x n or n) broadcast over rows.
Var add_bias(const Var& x, const Var& b);
Var scale(const Var& a, double c);
Var relu(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Numerically stable softmax along axis 0 or 1 of a rank-2 tensor (rank 1 is
/// treated as a single row). -inf entries get zero weight; a slice that is
/// entirely -inf is an error.
Var softmax(const Var& a, int axis = 1);
Var concat_cols(std::span<const Var> parts);
Var select_rows(const Var& a, std::span<const std::size_t> rows);
/// Sets masked entries (mask == 0) to -inf.
Var apply_mask(const Var& logits, std::span<const std::uint8_t> mask);
/// Grouped dot products: q is B x d, k is (B*n) x d; out[b][j] = c * q_b . k_{b*n+j}.
Var group_scores(const Var& q, const Var& k, std::size_t n, double c);
/// Grouped weighted sum: w is B x n, v is (B*n) x d; out[b] = sum_j w[b][j] v_{b*n+j}.
Var group_pool(const Var& w, const Var& v, std::size_t n);
/// Forward: row-wise one-hot of the argmax. Backward: identity onto `soft`.
Var straight_through(const Var& soft);

struct GumbelSample {
  Var soft;                 // softmax((logits + g) / temperature)
  Var hard;                 // straight-through one-hot
  std::vector<int> argmax;  // per row
  Tensor noise;             // the Gumbel draws, for reproduction
};

/// Relaxed categorical sample with fresh Gumbel noise.
GumbelSample gumbel_softmax_sample(const Var& logits, double temperature, Rng& rng);
/// Same relaxation with caller-provided noise.
GumbelSample gumbel_softmax_with_noise(const Var& logits, const Tensor& noise, double temperature);

std::vector<int> argmax_rows(const Tensor& t);

}  // namespace cavmarl::nn
