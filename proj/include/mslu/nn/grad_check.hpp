#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mslu/nn/layers.hpp"

namespace mslu::nn {

struct GradCheckEntry {
  std::string name;
  std::size_t coordinates_checked = 0;
  // max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, noise_floor)
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
  std::string summary() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  // Gradients below this are indistinguishable from differencing round-off
  // (~1e-16 / step), so a tensor with a true zero gradient still passes.
  double noise_floor = 1e-6;
};

// Compares reverse-mode gradients of `loss` against central finite
// differences. `loss` must rebuild its graph from the current values of
// `inputs` on every call. Throws mslu::Error on non-finite values.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           const ParameterList<double>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace mslu::nn
