#pragma once

#include <functional>
#include <vector>

#include "mslu/ctc/ctc.hpp"
#include "mslu/decoder/speech_model.hpp"

namespace mslu::decoder {

// Returns log-probabilities [L, V] for a full token template.
using Predictor = std::function<std::vector<float>(const std::vector<int>& tokens)>;

struct MaskPredictResult {
  std::vector<int> tokens;
  std::size_t iterations = 0;
  std::size_t decoder_calls = 0;
  std::vector<std::vector<std::size_t>> commits;  // positions committed at each iteration
};

// Each iteration predicts every masked position and commits the
// ceil(M0 / max_iter) most probable ones (ties to the lower position); the
// final iteration commits whatever is left. Reserved ids are never predicted.
MaskPredictResult mask_predict(const ctc::MaskedHypothesis& hyp, const Predictor& predict,
                               std::size_t max_iter = 10);

// Predictor over one utterance's encoder output (batch of one).
Predictor model_predictor(const SpeechModel<float>& model, const encoder::EncoderOutput<float>& enc);

}  // namespace mslu::decoder
