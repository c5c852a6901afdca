#pragma once

#include <random>
#include <vector>

#include "mslu/encoder/model_config.hpp"
#include "mslu/nn/layers.hpp"

namespace mslu::encoder {

template <typename T>
struct EncoderOutput {
  nn::Tensor<T> h_enc;               // [B, T', d_model]
  std::vector<std::size_t> lengths;  // valid T' per utterance
  std::vector<std::uint8_t> valid;   // [B * T'] key mask derived from lengths
  std::vector<nn::Tensor<T>> layer_states;  // block outputs, filled on request

  std::size_t batch() const { return lengths.size(); }
  std::size_t frames() const { return h_enc.dim(1); }
};

// Self-attention and feed-forward sublayers with residuals.
template <typename T>
struct EncoderBlock {
  nn::LayerNorm<T> attn_norm, ffn_norm;
  nn::MultiHeadAttention<T> attn;
  nn::FeedForward<T> ffn;
  double dropout = 0.0;
  bool post_norm = false;

  EncoderBlock() = default;
  EncoderBlock(const ModelConfig& cfg, std::mt19937_64& rng);

  nn::Tensor<T> operator()(const nn::Tensor<T>& x, nn::ValidMask valid,
                           const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
};

// Conv front end, then the block stack, then a final norm (pre-norm only).
template <typename T>
struct Encoder {
  nn::ConvFrontend<T> frontend;
  std::vector<EncoderBlock<T>> blocks;
  nn::LayerNorm<T> final_norm;
  bool post_norm = false;

  Encoder() = default;
  Encoder(const ModelConfig& cfg, std::mt19937_64& rng);

  // features [B, T, mel_bins] padded with lengths in frames.
  EncoderOutput<T> operator()(const nn::Tensor<T>& features, const std::vector<std::size_t>& lengths,
                              const nn::ForwardContext& ctx, bool keep_layers = false) const;
  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
};

// Residual helper shared with the decoder: x + dropout(y).
template <typename T>
nn::Tensor<T> residual(const nn::Tensor<T>& x, const nn::Tensor<T>& y, double p,
                       const nn::ForwardContext& ctx);

}  // namespace mslu::encoder
