#pragma once

#include <cstdint>
#include <vector>

#include "mslu/nn/layers.hpp"

namespace mslu::train {

// peak * min(step / warmup, sqrt(warmup / step)); throws ConfigError for step < 1.
double noam_lr(std::size_t step, std::size_t warmup = 25000, double peak = 0.4);

// rho * ctc + (1 - rho) * dec; throws ConfigError when rho is outside [0, 1].
double hybrid_loss(double l_ctc, double l_dec, double rho);
nn::Tensor<float> hybrid_loss(const nn::Tensor<float>& l_ctc, const nn::Tensor<float>& l_dec, double rho);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Adam with bias correction over the parameters it was given; others are
// never touched.
class Adam {
 public:
  Adam(nn::ParameterList<float> params, AdamConfig config = {});

  // Applies one update from the accumulated gradients. Returns false and
  // changes nothing when any gradient is non-finite. Parameters that received
  // no gradient are treated as having a zero gradient.
  bool step(double lr);
  void zero_grad();

  std::size_t steps() const { return t_; }
  const nn::ParameterList<float>& parameters() const { return params_; }

  // Moment buffers, aligned with parameters().
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  nn::ParameterList<float> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the norm before clipping. No-op for max_norm <= 0.
double clip_grad_norm(const nn::ParameterList<float>& params, double max_norm);

}  // namespace mslu::train
