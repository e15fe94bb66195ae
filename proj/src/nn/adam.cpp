#include "cavmarl/nn/adam.hpp"

#include <cmath>

namespace cavmarl::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) ||
      !(cfg_.eps > 0.0)) {
    throw std::invalid_argument("Adam: invalid hyperparameters");
  }
  for (Parameter* p : params_) {
    m_.emplace_back(p->value().shape(), 0.0);
    v_.emplace_back(p->value().shape(), 0.0);
  }
}

void Adam::step() {
  for (Parameter* p : params_) {
    if (!p->grad().all_finite()) throw NonFiniteGradient("Adam: non-finite gradient in parameter " + p->name());
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& w = params_[k]->value();
    const Tensor& g = params_[k]->grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace cavmarl::nn
