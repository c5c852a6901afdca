#include "mslu/decoder/mask_predict.hpp"

#include <algorithm>
#include <cmath>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/error.hpp"
#include "mslu/nn/ops.hpp"

namespace mslu::decoder {

MaskPredictResult mask_predict(const ctc::MaskedHypothesis& hyp, const Predictor& predict,
                               std::size_t max_iter) {
  if (max_iter == 0) throw ShapeError("mask_predict: max_iter must be >= 1");
  MaskPredictResult r;
  r.tokens = hyp.tokens;
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    if (r.tokens[i] == ctc::Vocabulary::kMask) masked.push_back(i);
  if (masked.empty()) return r;
  const std::size_t per_iter = (masked.size() + max_iter - 1) / max_iter;
  const std::size_t L = r.tokens.size();

  while (!masked.empty() && r.iterations < max_iter) {
    ++r.iterations;
    const auto lp = predict(r.tokens);
    ++r.decoder_calls;
    if (lp.size() % L != 0 || lp.size() / L <= ctc::Vocabulary::kReserved) {
      throw ShapeError("mask_predict: predictor returned a malformed posterior");
    }
    const std::size_t V = lp.size() / L;
    struct Candidate {
      std::size_t pos;
      int token;
      float score;
    };
    std::vector<Candidate> cands;
    for (std::size_t pos : masked) {
      const float* row = lp.data() + pos * V;
      int best = ctc::Vocabulary::kReserved;
      for (std::size_t v = ctc::Vocabulary::kReserved + 1; v < V; ++v)
        if (row[v] > row[best]) best = static_cast<int>(v);
      cands.push_back({pos, best, row[best]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    const std::size_t take = r.iterations == max_iter ? cands.size() : std::min(per_iter, cands.size());
    std::vector<std::size_t> committed;
    for (std::size_t i = 0; i < take; ++i) {
      r.tokens[cands[i].pos] = cands[i].token;
      committed.push_back(cands[i].pos);
    }
    std::sort(committed.begin(), committed.end());
    std::erase_if(masked, [&](std::size_t p) { return std::binary_search(committed.begin(), committed.end(), p); });
    r.commits.push_back(std::move(committed));
  }
  return r;
}

Predictor model_predictor(const SpeechModel<float>& model, const encoder::EncoderOutput<float>& enc) {
  if (enc.batch() != 1) throw ShapeError("model_predictor: expects a single utterance");
  return [&model, &enc](const std::vector<int>& tokens) {
    nn::NoGradGuard guard;
    auto out = model.decode_forward(tokens, 1, tokens.size(), enc, {});
    auto lp = nn::log_softmax(out.logits);
    return std::vector<float>(lp.data().begin(), lp.data().end());
  };
}

}  // namespace mslu::decoder
