#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mslu/nn/tensor.hpp"

namespace mslu::ctc {

struct CtcResult {
  double loss = 0.0;       // -log p(target | posterior); +inf when infeasible
  bool feasible = true;
  std::vector<double> grad;  // d loss / d log_probs, [frames * vocab]; zero when infeasible
};

// Frames needed to emit `target`: its length plus one blank per adjacent repeat.
std::size_t min_frames(std::span<const int> target);

// Forward-backward over the blank-interleaved lattice in log space.
// log_probs is row-major [frames, vocab]; blank id is 0.
template <typename T>
CtcResult ctc_loss(std::span<const T> log_probs, std::size_t frames, std::size_t vocab,
                   std::span<const int> target, bool with_grad = true);

struct CtcBatchInfo {
  std::vector<double> nll;          // per item, +inf when infeasible
  std::vector<bool> feasible;
  std::size_t skipped = 0;
};

// Scalar sum_i nll_i / (|target_i| * N_feasible) over feasible items, i.e. the
// batch mean of length-normalized losses. log_probs [B, T, V]; frame lengths
// per item. Infeasible items contribute nothing and are reported in `info`.
template <typename T>
nn::Tensor<T> ctc_batch_loss(const nn::Tensor<T>& log_probs, const std::vector<std::size_t>& lengths,
                             const std::vector<std::vector<int>>& targets,
                             CtcBatchInfo* info = nullptr);

// Merge adjacent repeats, then drop blank, pad and mask.
std::vector<int> collapse(std::span<const int> frame_labels);

// Shortest frame path that collapses to `tokens`: a blank between each
// adjacent repeat. Its length is min_frames(tokens).
std::vector<int> canonical_path(std::span<const int> tokens);

struct Hypothesis {
  std::vector<int> tokens;
  std::vector<double> confidence;  // max frame probability among the frames merged into each token
};

// Per-frame argmax over blank and non-reserved ids, then collapse.
// log_probs row-major [frames, vocab].
template <typename T>
Hypothesis greedy_decode(std::span<const T> log_probs, std::size_t frames, std::size_t vocab);

struct MaskedHypothesis {
  std::vector<int> tokens;  // masked positions hold Vocabulary::kMask
  std::vector<double> confidence;
  std::vector<bool> is_masked;

  std::size_t mask_count() const;
};

// Positions with confidence strictly below threshold become masks.
MaskedHypothesis mask_low_confidence(const std::vector<int>& tokens,
                                     const std::vector<double>& confidence,
                                     double threshold = 0.9);

}  // namespace mslu::ctc
