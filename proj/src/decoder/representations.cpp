#include "mslu/decoder/representations.hpp"

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/decoder/mask_predict.hpp"
#include "mslu/error.hpp"

namespace mslu::decoder {

std::string LayerId::name() const {
  return (encoder ? "encoder." : "decoder.") + std::to_string(index);
}

LayerId penultimate_layer(const encoder::ModelConfig& cfg) {
  return {false, cfg.dec_layers >= 2 ? cfg.dec_layers - 2 : 0};
}

LayerId parse_layer(const std::string& spec, const encoder::ModelConfig& cfg) {
  const auto dot = spec.find('.');
  if (dot == std::string::npos) throw ConfigError("layer '" + spec + "': expected encoder.N or decoder.N");
  const std::string part = spec.substr(0, dot), rest = spec.substr(dot + 1);
  if (part != "encoder" && part != "decoder") throw ConfigError("layer '" + spec + "': unknown stack");
  const bool enc = part == "encoder";
  const std::size_t n = enc ? cfg.enc_layers : cfg.dec_layers;
  if (rest == "last") return {enc, n - 1};
  if (rest == "penultimate") {
    if (enc) throw ConfigError("layer '" + spec + "': penultimate is defined for the decoder only");
    return penultimate_layer(cfg);
  }
  if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("layer '" + spec + "': bad index");
  }
  const std::size_t index = std::stoul(rest);
  if (index >= n) {
    throw ConfigError("layer '" + spec + "': index outside 0.." + std::to_string(n - 1));
  }
  return {enc, index};
}

std::vector<Template> build_templates(const SpeechModel<float>& model,
                                      const encoder::EncoderOutput<float>& enc, double threshold) {
  nn::NoGradGuard guard;
  const auto lp = model.ctc_log_probs(enc);
  const std::size_t T = lp.dim(1), V = lp.dim(2);
  std::vector<Template> out;
  for (std::size_t b = 0; b < enc.batch(); ++b) {
    const auto rows = lp.data().subspan(b * T * V, enc.lengths[b] * V);
    auto h = ctc::greedy_decode<float>(rows, enc.lengths[b], V);
    Template t;
    if (h.tokens.empty()) {
      t.hyp = ctc::mask_low_confidence({ctc::Vocabulary::kMask}, {0.0}, threshold);
      t.fallback = true;
    } else {
      t.hyp = ctc::mask_low_confidence(h.tokens, h.confidence, threshold);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RepresentationSequence> extract_representations(
    const SpeechModel<float>& model, const std::vector<const features::FeatureSequence*>& batch,
    const ExtractOptions& options) {
  nn::NoGradGuard guard;
  const LayerId layer = parse_layer(options.layer, model.config);
  const auto fb = collate<float>(batch);
  const auto enc = model.encode(fb.features, fb.lengths, {}, layer.encoder);
  const std::size_t d = model.config.d_model;
  std::vector<RepresentationSequence> out(batch.size());

  if (layer.encoder) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto& r = out[b];
      r.vectors = item_rows(enc.layer_states[layer.index], b, enc.lengths[b]);
      r.length = enc.lengths[b];
      r.width = d;
      r.layer = layer.name();
    }
    return out;
  }

  const auto templates = build_templates(model, enc, options.threshold);
  std::vector<std::vector<int>> seqs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<int> tokens = templates[b].hyp.tokens;
    if (options.refine && templates[b].hyp.mask_count() > 0) {
      std::vector<const EncodingCache*> one;
      EncodingCache cache{item_rows(enc.h_enc, b, enc.lengths[b]), enc.lengths[b]};
      one.push_back(&cache);
      const auto single = batch_encodings(one, d);
      tokens = mask_predict(templates[b].hyp, model_predictor(model, single), options.max_iter).tokens;
    }
    seqs.push_back(std::move(tokens));
  }
  std::size_t L = 0;
  const auto ids = pad_tokens(seqs, L);
  const auto dec = model.decode_forward(ids, batch.size(), L, enc, {});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& r = out[b];
    r.vectors = item_rows(dec.layer_states[layer.index], b, seqs[b].size());
    r.length = seqs[b].size();
    r.width = d;
    r.layer = layer.name();
    r.tokens = seqs[b];
    r.fallback = templates[b].fallback;
  }
  return out;
}

}  // namespace mslu::decoder
