#include "mslu/decoder/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/error.hpp"

namespace mslu::decoder {

MlmSample mlm_corrupt(const std::vector<int>& target, std::mt19937_64& rng) {
  if (target.empty()) throw ShapeError("mlm_corrupt: empty target");
  const std::size_t L = target.size();
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, L)(rng);
  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n entries are a uniform n-subset.
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, L - 1)(rng)]);
  }
  MlmSample s{target, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n)}};
  std::sort(s.positions.begin(), s.positions.end());
  for (std::size_t p : s.positions) s.input[p] = ctc::Vocabulary::kMask;
  return s;
}

template <typename T>
nn::Tensor<T> mlm_loss(const nn::Tensor<T>& logits, const std::vector<std::vector<int>>& targets,
                       const std::vector<std::vector<std::size_t>>& positions, double smoothing,
                       bool all_positions) {
  if (logits.rank() != 3) throw ShapeError("mlm_loss: expected logits [B, L, V]");
  const std::size_t B = logits.dim(0), L = logits.dim(1), V = logits.dim(2);
  if (targets.size() != B || (!all_positions && positions.size() != B)) {
    throw ShapeError("mlm_loss: batch size mismatch");
  }
  if (smoothing < 0.0 || smoothing >= 1.0) throw ShapeError("mlm_loss: smoothing outside [0, 1)");
  if (V < 2) throw ShapeError("mlm_loss: vocabulary too small");

  const double off = smoothing / static_cast<double>(V - 1);
  struct Scored {
    std::size_t row;
    int gold;
    double weight;
  };
  std::vector<Scored> scored;
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b].size() > L) throw ShapeError("mlm_loss: target longer than logits");
    std::vector<std::size_t> pos;
    if (all_positions) {
      pos.resize(targets[b].size());
      std::iota(pos.begin(), pos.end(), std::size_t{0});
    } else {
      pos = positions[b];
    }
    if (pos.empty()) throw ShapeError("mlm_loss: empty mask set");
    for (std::size_t p : pos) {
      if (p >= targets[b].size()) throw ShapeError("mlm_loss: position outside sequence");
      const int gold = targets[b][p];
      if (gold < 0 || static_cast<std::size_t>(gold) >= V) throw ShapeError("mlm_loss: gold id out of range");
      scored.push_back({b * L + p, gold, 1.0 / (static_cast<double>(pos.size()) * static_cast<double>(B))});
    }
  }

  // Per scored row: log-softmax in double, loss, and p - q for the backward.
  std::vector<double> grad(scored.size() * V);
  double total = 0.0;
  const auto x = logits.data();
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const T* row = x.data() + scored[i].row * V;
    double m = -INFINITY;
    for (std::size_t v = 0; v < V; ++v) m = std::max(m, static_cast<double>(row[v]));
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(static_cast<double>(row[v]) - m);
    const double lz = m + std::log(z);
    double loss = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      const double lp = static_cast<double>(row[v]) - lz;
      const double q = static_cast<int>(v) == scored[i].gold ? 1.0 - smoothing : off;
      loss -= q * lp;
      grad[i * V + v] = scored[i].weight * (std::exp(lp) - q);
    }
    total += scored[i].weight * loss;
  }

  auto out = nn::Tensor<T>::make_result({1}, {static_cast<T>(total)}, {logits.node_ptr()});
  nn::Node<T>* self = out.node();
  nn::Node<T>* in = logits.node();
  std::vector<std::size_t> rows;
  for (const auto& s : scored) rows.push_back(s.row);
  nn::set_backward(out, [self, in, rows = std::move(rows), grad = std::move(grad), V] {
    const double g = static_cast<double>(self->grad[0]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      T* dst = in->grad.data() + rows[i] * V;
      for (std::size_t v = 0; v < V; ++v) dst[v] += static_cast<T>(g * grad[i * V + v]);
    }
  });
  return out;
}

template nn::Tensor<float> mlm_loss(const nn::Tensor<float>&, const std::vector<std::vector<int>>&,
                                    const std::vector<std::vector<std::size_t>>&, double, bool);
template nn::Tensor<double> mlm_loss(const nn::Tensor<double>&, const std::vector<std::vector<int>>&,
                                     const std::vector<std::vector<std::size_t>>&, double, bool);

}  // namespace mslu::decoder
