#include "mslu/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mslu/error.hpp"

namespace mslu::eval {

namespace {

void check_aligned(const std::vector<Multihot>& p, const std::vector<Multihot>& r) {
  if (p.empty()) throw ShapeError("metrics: empty prediction set");
  if (p.size() != r.size()) {
    throw ShapeError("metrics: " + std::to_string(p.size()) + " predictions for " + std::to_string(r.size()) +
                     " references");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != r[i].size()) throw ShapeError("metrics: vector length mismatch at item " + std::to_string(i));
  }
}

}  // namespace

double BitCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double intent_accuracy(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references) {
  check_aligned(predictions, references);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == references[i];
  return double(hits) / double(predictions.size());
}

std::vector<BitCounts> bit_counts(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references) {
  check_aligned(predictions, references);
  std::vector<BitCounts> out(references.front().size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != out.size()) throw ShapeError("metrics: vectors of different lengths");
    for (std::size_t b = 0; b < out.size(); ++b) {
      const bool p = predictions[i][b], r = references[i][b];
      out[b].tp += p && r;
      out[b].fp += p && !r;
      out[b].fn += !p && r;
    }
  }
  return out;
}

BitCounts pooled_counts(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references) {
  BitCounts total;
  for (const auto& c : bit_counts(predictions, references)) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total;
}

double micro_f1(const std::vector<Multihot>& predictions, const std::vector<Multihot>& references) {
  return pooled_counts(predictions, references).f1();
}

std::size_t edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
  std::vector<std::size_t> row(ref.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (hyp[i - 1] != ref[j - 1])});
      diag = up;
    }
  }
  return row[ref.size()];
}

double token_error_rate(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size()) throw ShapeError("token_error_rate: hypothesis and reference counts differ");
  std::size_t errors = 0, total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    errors += edit_distance(hyps[i], refs[i]);
    total += refs[i].size();
  }
  if (total == 0) throw DataError("token_error_rate: reference corpus has no tokens");
  return double(errors) / double(total);
}

}  // namespace mslu::eval
