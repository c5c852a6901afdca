#pragma once

#include <cstdint>
#include <vector>

namespace mslu::eval {

using Multihot = std::vector<std::uint8_t>;

// Exact match over the whole vector (action and every slot).
// Throws ShapeError on empty input or mismatched lengths.
double intent_accuracy(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references);

struct BitCounts {
  std::size_t tp = 0, fp = 0, fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  // 2PR / (P + R), 0 when undefined.
  double f1() const;
};

// Counts pooled over every bit of every vector.
BitCounts pooled_counts(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references);
// Per bit position.
std::vector<BitCounts> bit_counts(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references);

double micro_f1(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references);

std::size_t edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

// Summed edit distance over total reference tokens. Throws DataError when the
// references hold no tokens.
double token_error_rate(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs);

}  // namespace mslu::eval
