#include "mslu/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace mslu::nn {

namespace {

double evaluate(const std::function<Tensor<double>()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw Error("grad_check: non-finite loss encountered");
  return v;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "max relative error " << max_relative_error << " over " << entries.size() << " tensors";
  for (const auto& e : entries) {
    if (e.max_relative_error > 1e-6) os << "\n  " << e.name << ": " << e.max_relative_error;
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           const ParameterList<double>& inputs, const GradCheckOptions& options) {
  for (const auto& in : inputs) {
    in.tensor.node()->grad.assign(in.tensor.size(), 0.0);
    in.tensor.node()->requires_grad = true;
  }
  auto root = loss();
  if (!std::isfinite(root.item())) throw Error("grad_check: non-finite loss encountered");
  root.backward();

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (const auto& in : inputs) {
    Tensor<double> t = in.tensor;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (analytic.size() != t.size()) analytic.assign(t.size(), 0.0);
    for (double g : analytic)
      if (!std::isfinite(g)) throw Error("grad_check: non-finite gradient in " + in.name);

    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates);
    }

    double max_diff = 0.0, scale_ref = options.noise_floor;
    for (double g : analytic) scale_ref = std::max(scale_ref, std::abs(g));
    for (std::size_t i : coords) {
      double& x = t.data()[i];
      const double saved = x;
      x = saved + options.step;
      const double up = evaluate(loss);
      x = saved - options.step;
      const double down = evaluate(loss);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      scale_ref = std::max(scale_ref, std::abs(numeric));
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
    }
    GradCheckEntry entry{in.name, coords.size(), max_diff / scale_ref};
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace mslu::nn
