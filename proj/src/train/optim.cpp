#include "mslu/train/optim.hpp"

#include <cmath>

#include "mslu/error.hpp"
#include "mslu/nn/ops.hpp"

namespace mslu::train {

double noam_lr(std::size_t step, std::size_t warmup, double peak) {
  if (step < 1) throw ConfigError("noam_lr: step must be at least 1");
  if (warmup < 1) throw ConfigError("noam_lr: warmup must be at least 1");
  const double s = double(step), w = double(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

namespace {

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("hybrid_loss: rho must lie in [0, 1]");
}

}  // namespace

double hybrid_loss(double l_ctc, double l_dec, double rho) {
  check_rho(rho);
  return rho * l_ctc + (1.0 - rho) * l_dec;
}

nn::Tensor<float> hybrid_loss(const nn::Tensor<float>& l_ctc, const nn::Tensor<float>& l_dec, double rho) {
  check_rho(rho);
  if (rho == 1.0) return l_ctc;
  if (rho == 0.0) return l_dec;
  return nn::add(nn::scale(l_ctc, float(rho)), nn::scale(l_dec, float(1.0 - rho)));
}

Adam::Adam(nn::ParameterList<float> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0f);
    v_.emplace_back(p.tensor.size(), 0.0f);
  }
}

bool Adam::step(double lr) {
  for (const auto& p : params_) {
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    nn::Tensor<float> t = params_[k].tensor;
    const auto g = t.grad();
    const bool has_grad = g.size() == t.size();
    auto w = t.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      m[i] = float(config_.beta1 * m[i] + (1.0 - config_.beta1) * gi);
      v[i] = float(config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi);
      const double mh = m[i] / c1, vh = v[i] / c2;
      w[i] = float(w[i] - lr * mh / (std::sqrt(vh) + config_.eps));
    }
  }
  return true;
}

void Adam::zero_grad() {
  for (const auto& p : params_) nn::Tensor<float>(p.tensor).zero_grad();
}

double clip_grad_norm(const nn::ParameterList<float>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (float g : p.tensor.grad()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const float s = float(max_norm / norm);
    for (const auto& p : params) {
      for (float& g : nn::Tensor<float>(p.tensor).grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace mslu::train
