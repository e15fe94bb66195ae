#pragma once

#include <stdexcept>
#include <vector>

#include "cavmarl/nn/autodiff.hpp"

namespace cavmarl::nn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam over a fixed parameter list. The parameters must outlive the optimizer.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  /// Applies one update from the accumulated gradients. Throws
  /// NonFiniteGradient before touching anything if a gradient is NaN or inf.
  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  long long steps() const { return t_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(long long t) { t_ = t; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long long t_ = 0;
};

}  // namespace cavmarl::nn
