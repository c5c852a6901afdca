#pragma once

#include <random>
#include <vector>

#include "mslu/encoder/encoder.hpp"

namespace mslu::decoder {

template <typename T>
struct DecoderOutput {
  nn::Tensor<T> logits;                     // [B, L, V]
  std::vector<nn::Tensor<T>> layer_states;  // block i output, [B, L, d]
  std::vector<std::uint8_t> valid;          // [B * L], false at pad positions
  std::vector<nn::Tensor<T>> self_weights;  // per block [B, h, L, L], when requested
  std::vector<nn::Tensor<T>> cross_weights; // per block [B, h, L, T'], when requested
};

// Bidirectional self-attention (pad keys masked, no causal mask), cross
// attention over h_enc, feed-forward; each sublayer with a residual.
template <typename T>
struct DecoderBlock {
  nn::LayerNorm<T> self_norm, cross_norm, ffn_norm;
  nn::MultiHeadAttention<T> self_attn, cross_attn;
  nn::FeedForward<T> ffn;
  double dropout = 0.0;
  bool post_norm = false;

  DecoderBlock() = default;
  DecoderBlock(const encoder::ModelConfig& cfg, std::mt19937_64& rng);

  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
};

template <typename T>
struct Decoder {
  nn::Tensor<T> embed;  // [V, d]
  std::vector<DecoderBlock<T>> blocks;
  nn::LayerNorm<T> final_norm;
  nn::Linear<T> output;
  double dropout = 0.0;
  bool post_norm = false;

  Decoder() = default;
  Decoder(const encoder::ModelConfig& cfg, std::mt19937_64& rng);

  // ids row-major [B, L]; Vocabulary::kPad marks padding.
  DecoderOutput<T> operator()(const std::vector<int>& ids, std::size_t batch, std::size_t length,
                              const encoder::EncoderOutput<T>& enc, const nn::ForwardContext& ctx,
                              bool keep_weights = false) const;
  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
};

// pe[pos][2i] = sin(pos / 10000^(2i/d)), pe[pos][2i+1] = cos(...).
std::vector<double> sinusoidal_encoding(std::size_t length, std::size_t d);

}  // namespace mslu::decoder
