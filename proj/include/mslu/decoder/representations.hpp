#pragma once

#include <string>
#include <vector>

#include "mslu/ctc/ctc.hpp"
#include "mslu/decoder/speech_model.hpp"

namespace mslu::decoder {

// "encoder.N" or "decoder.N" (block N output); also "decoder.penultimate",
// "encoder.last" and "decoder.last".
struct LayerId {
  bool encoder = false;
  std::size_t index = 0;

  std::string name() const;
  bool operator==(const LayerId&) const = default;
};

LayerId parse_layer(const std::string& spec, const encoder::ModelConfig& cfg);
LayerId penultimate_layer(const encoder::ModelConfig& cfg);

// Decoder input template for one utterance.
struct Template {
  ctc::MaskedHypothesis hyp;
  bool fallback = false;  // greedy decode was empty; a single mask stands in
};

// Greedy CTC decode and confidence masking for each utterance of `enc`.
std::vector<Template> build_templates(const SpeechModel<float>& model,
                                      const encoder::EncoderOutput<float>& enc,
                                      double threshold = 0.9);

struct RepresentationSequence {
  std::vector<float> vectors;  // [length, width]
  std::size_t length = 0;
  std::size_t width = 0;
  std::string layer;
  std::vector<int> tokens;  // decoder template (masks included); empty for encoder layers
  bool fallback = false;
};

struct ExtractOptions {
  std::string layer = "decoder.penultimate";
  bool refine = false;  // mask-predict before the representation pass
  double threshold = 0.9;
  std::size_t max_iter = 10;
};

// encode -> greedy decode -> mask_low_confidence -> one decoder pass, per
// utterance of the batch. Runs without recording gradients.
std::vector<RepresentationSequence> extract_representations(
    const SpeechModel<float>& model, const std::vector<const features::FeatureSequence*>& batch,
    const ExtractOptions& options = {});

}  // namespace mslu::decoder
