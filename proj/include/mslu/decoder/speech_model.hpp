#pragma once

#include <cstdint>
#include <vector>

#include "mslu/decoder/decoder.hpp"
#include "mslu/features/mel.hpp"

namespace mslu::decoder {

// Encoder, CTC classification layer and MLM decoder sharing one vocabulary.
// Parameter names: encoder.*, ctc.*, decoder.*.
template <typename T>
struct SpeechModel {
  encoder::ModelConfig config;
  encoder::Encoder<T> encoder;
  nn::Linear<T> ctc_head;
  Decoder<T> decoder;

  SpeechModel() = default;
  SpeechModel(const encoder::ModelConfig& cfg, std::uint64_t seed);

  nn::ParameterList<T> parameters() const;

  encoder::EncoderOutput<T> encode(const nn::Tensor<T>& features, const std::vector<std::size_t>& lengths,
                                   const nn::ForwardContext& ctx, bool keep_layers = false) const {
    return encoder(features, lengths, ctx, keep_layers);
  }
  // log_softmax(ctc_head(h_enc)), [B, T', V].
  nn::Tensor<T> ctc_log_probs(const encoder::EncoderOutput<T>& enc) const;
  DecoderOutput<T> decode_forward(const std::vector<int>& ids, std::size_t batch, std::size_t length,
                                  const encoder::EncoderOutput<T>& enc, const nn::ForwardContext& ctx,
                                  bool keep_weights = false) const {
    return decoder(ids, batch, length, enc, ctx, keep_weights);
  }
};

template <typename T>
struct FeatureBatch {
  nn::Tensor<T> features;  // [B, T_max, F], zero padded
  std::vector<std::size_t> lengths;
};

template <typename T>
FeatureBatch<T> collate(const std::vector<const features::FeatureSequence*>& items);

// Pads token sequences with Vocabulary::kPad to a common length, row-major.
std::vector<int> pad_tokens(const std::vector<std::vector<int>>& seqs, std::size_t& length);

// Rows [0, len) of item b from a [B, L, d] tensor.
template <typename T>
std::vector<T> item_rows(const nn::Tensor<T>& x, std::size_t b, std::size_t len);

// Rebuilds a padded encoder output from per-utterance [T'_i, d] states.
struct EncodingCache {
  std::vector<float> h;  // [frames, d]
  std::size_t frames = 0;
};
encoder::EncoderOutput<float> batch_encodings(const std::vector<const EncodingCache*>& items, std::size_t d);

}  // namespace mslu::decoder
