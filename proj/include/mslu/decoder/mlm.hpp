#pragma once

#include <random>
#include <vector>

#include "mslu/nn/tensor.hpp"

namespace mslu::decoder {

struct MlmSample {
  std::vector<int> input;            // target with masked positions replaced by kMask
  std::vector<std::size_t> positions;  // sorted, unique
};

// n ~ U{1..L} positions chosen without replacement.
MlmSample mlm_corrupt(const std::vector<int>& target, std::mt19937_64& rng);

// Label-smoothed cross entropy on logits [B, L, V]. Per position:
//   -(1 - eps) log p(gold) - eps / (V - 1) * sum_{v != gold} log p(v)
// averaged over the scored positions of each sequence, then over sequences.
// Scored positions are `positions[b]`, or every position < |targets[b]| when
// all_positions is set.
template <typename T>
nn::Tensor<T> mlm_loss(const nn::Tensor<T>& logits, const std::vector<std::vector<int>>& targets,
                       const std::vector<std::vector<std::size_t>>& positions, double smoothing = 0.1,
                       bool all_positions = false);

}  // namespace mslu::decoder
