#include "mslu/ctc/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/error.hpp"

namespace mslu::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t min_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

template <typename T>
CtcResult ctc_loss(std::span<const T> log_probs, std::size_t frames, std::size_t vocab,
                   std::span<const int> target, bool with_grad) {
  if (target.empty()) throw ShapeError("ctc_loss: empty target");
  if (log_probs.size() < frames * vocab) throw ShapeError("ctc_loss: posterior too small");
  for (int k : target) {
    if (k <= Vocabulary::kBlank || static_cast<std::size_t>(k) >= vocab) {
      throw ShapeError("ctc_loss: target id " + std::to_string(k) + " is blank or out of range");
    }
  }
  CtcResult r;
  if (with_grad) r.grad.assign(frames * vocab, 0.0);
  if (frames < min_frames(target)) {
    r.loss = std::numeric_limits<double>::infinity();
    r.feasible = false;
    return r;
  }

  const std::size_t S = 2 * target.size() + 1;
  std::vector<int> ext(S, Vocabulary::kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  // A skip from s-2 to s is allowed when s is a label differing from label s-2.
  std::vector<bool> skip(S, false);
  for (std::size_t s = 2; s < S; ++s) skip[s] = ext[s] != Vocabulary::kBlank && ext[s] != ext[s - 2];
  auto lp = [&](std::size_t t, std::size_t s) {
    return static_cast<double>(log_probs[t * vocab + static_cast<std::size_t>(ext[s])]);
  };

  std::vector<double> alpha(frames * S, kNegInf);
  alpha[0] = lp(0, 0);
  if (S > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    const double* prev = alpha.data() + (t - 1) * S;
    double* cur = alpha.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (skip[s]) a = log_add(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + lp(t, s);
    }
  }
  const double* last = alpha.data() + (frames - 1) * S;
  const double log_p = log_add(last[S - 1], last[S - 2]);
  r.loss = -log_p;
  if (!with_grad) return r;

  // beta[t][s]: log probability of finishing from state s at t, emissions after t.
  std::vector<double> beta(frames * S, kNegInf);
  beta[(frames - 1) * S + S - 1] = 0.0;
  beta[(frames - 1) * S + S - 2] = 0.0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    const double* next = beta.data() + (t + 1) * S;
    double* cur = beta.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double b = next[s] == kNegInf ? kNegInf : next[s] + lp(t + 1, s);
      if (s + 1 < S && next[s + 1] != kNegInf) b = log_add(b, next[s + 1] + lp(t + 1, s + 1));
      if (s + 2 < S && skip[s + 2] && next[s + 2] != kNegInf) {
        b = log_add(b, next[s + 2] + lp(t + 1, s + 2));
      }
      cur[s] = b;
    }
  }
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double occ = alpha[t * S + s] + beta[t * S + s];
      if (occ == kNegInf) continue;
      r.grad[t * vocab + static_cast<std::size_t>(ext[s])] -= std::exp(occ - log_p);
    }
  }
  return r;
}

template <typename T>
nn::Tensor<T> ctc_batch_loss(const nn::Tensor<T>& log_probs, const std::vector<std::size_t>& lengths,
                             const std::vector<std::vector<int>>& targets, CtcBatchInfo* info) {
  if (log_probs.rank() != 3) throw ShapeError("ctc_batch_loss: expected [B, T, V]");
  const std::size_t B = log_probs.dim(0), T_max = log_probs.dim(1), V = log_probs.dim(2);
  if (lengths.size() != B || targets.size() != B) throw ShapeError("ctc_batch_loss: batch size mismatch");

  std::vector<CtcResult> results(B);
  std::size_t feasible = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (lengths[b] > T_max || lengths[b] == 0) throw ShapeError("ctc_batch_loss: bad frame length");
    const auto item = log_probs.data().subspan(b * T_max * V, lengths[b] * V);
    results[b] = ctc_loss<T>(item, lengths[b], V, targets[b], log_probs.requires_grad());
    feasible += results[b].feasible;
  }
  std::vector<double> weight(B, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (!results[b].feasible) continue;
    weight[b] = 1.0 / (static_cast<double>(targets[b].size()) * static_cast<double>(feasible));
    total += weight[b] * results[b].loss;
  }
  if (info) {
    info->nll.clear();
    info->feasible.clear();
    for (const auto& r : results) {
      info->nll.push_back(r.loss);
      info->feasible.push_back(r.feasible);
    }
    info->skipped = B - feasible;
  }

  auto out = nn::Tensor<T>::make_result({1}, {static_cast<T>(total)}, {log_probs.node_ptr()});
  nn::Node<T>* self = out.node();
  nn::Node<T>* in = log_probs.node();
  nn::set_backward(out, [self, in, results = std::move(results), weight, T_max, V] {
    const double g = static_cast<double>(self->grad[0]);
    for (std::size_t b = 0; b < results.size(); ++b) {
      if (weight[b] == 0.0) continue;
      const auto& grad = results[b].grad;
      T* dst = in->grad.data() + b * T_max * V;
      for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += static_cast<T>(g * weight[b] * grad[i]);
    }
  });
  return out;
}

std::vector<int> collapse(std::span<const int> frame_labels) {
  std::vector<int> out;
  for (std::size_t t = 0; t < frame_labels.size(); ++t) {
    const int k = frame_labels[t];
    if (t > 0 && k == frame_labels[t - 1]) continue;
    if (!Vocabulary::is_silent(k)) out.push_back(k);
  }
  return out;
}

std::vector<int> canonical_path(std::span<const int> tokens) {
  std::vector<int> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && tokens[i] == tokens[i - 1]) out.push_back(Vocabulary::kBlank);
    out.push_back(tokens[i]);
  }
  return out;
}

template <typename T>
Hypothesis greedy_decode(std::span<const T> log_probs, std::size_t frames, std::size_t vocab) {
  if (log_probs.size() < frames * vocab) throw ShapeError("greedy_decode: posterior too small");
  Hypothesis h;
  int prev = -1;
  for (std::size_t t = 0; t < frames; ++t) {
    const T* row = log_probs.data() + t * vocab;
    int best = Vocabulary::kBlank;
    for (std::size_t k = 1; k < vocab; ++k) {
      const int id = static_cast<int>(k);
      if (Vocabulary::is_silent(id)) continue;
      if (row[k] > row[best]) best = id;
    }
    const double p = std::exp(static_cast<double>(row[best]));
    if (best != prev && best != Vocabulary::kBlank) {
      h.tokens.push_back(best);
      h.confidence.push_back(p);
    } else if (best == prev && best != Vocabulary::kBlank) {
      h.confidence.back() = std::max(h.confidence.back(), p);
    }
    prev = best;
  }
  return h;
}

std::size_t MaskedHypothesis::mask_count() const {
  return static_cast<std::size_t>(std::count(is_masked.begin(), is_masked.end(), true));
}

MaskedHypothesis mask_low_confidence(const std::vector<int>& tokens,
                                     const std::vector<double>& confidence, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ShapeError("mask_low_confidence: threshold outside [0, 1]");
  if (tokens.size() != confidence.size()) throw ShapeError("mask_low_confidence: length mismatch");
  MaskedHypothesis m{tokens, confidence, std::vector<bool>(tokens.size(), false)};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (confidence[i] < threshold) {
      m.tokens[i] = Vocabulary::kMask;
      m.is_masked[i] = true;
    }
  }
  return m;
}

template CtcResult ctc_loss<float>(std::span<const float>, std::size_t, std::size_t, std::span<const int>, bool);
template CtcResult ctc_loss<double>(std::span<const double>, std::size_t, std::size_t, std::span<const int>, bool);
template nn::Tensor<float> ctc_batch_loss(const nn::Tensor<float>&, const std::vector<std::size_t>&,
                                          const std::vector<std::vector<int>>&, CtcBatchInfo*);
template nn::Tensor<double> ctc_batch_loss(const nn::Tensor<double>&, const std::vector<std::size_t>&,
                                           const std::vector<std::vector<int>>&, CtcBatchInfo*);
template Hypothesis greedy_decode<float>(std::span<const float>, std::size_t, std::size_t);
template Hypothesis greedy_decode<double>(std::span<const double>, std::size_t, std::size_t);

}  // namespace mslu::ctc
