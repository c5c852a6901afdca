#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mslu/decoder/representations.hpp"
#include "mslu/nn/layers.hpp"

namespace mslu::slu {

struct SluConfig {
  std::size_t input_dim = 256;
  std::size_t d = 128;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn = 1024;
  std::size_t hidden = 1024;  // classifier hidden units
  std::size_t bits = 31;
  double dropout = 0.1;

  void validate() const;
};

template <typename T>
struct ClassAttentionResult {
  nn::Tensor<T> cls;      // [B, 1, d]
  nn::Tensor<T> weights;  // [B, h, 1, L]
};

// One shared norm for the sequence and the class vector, keys and values
// projected from the sequence only, the normalized class vector as the query.
template <typename T>
struct ClassAttentionLayer {
  nn::LayerNorm<T> norm, ffn_norm;
  nn::Linear<T> key, value, output;
  nn::FeedForward<T> ffn;
  std::size_t heads = 1;

  ClassAttentionLayer() = default;
  ClassAttentionLayer(const SluConfig& cfg, std::mt19937_64& rng);

  // x [B, L, d], cls [B, 1, d]; throws ShapeError when an item has no valid position.
  ClassAttentionResult<T> operator()(const nn::Tensor<T>& x, const nn::Tensor<T>& cls, nn::ValidMask valid,
                                     const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
};

template <typename T>
struct SluOutput {
  nn::Tensor<T> logits;                // [B, bits]
  std::vector<nn::Tensor<T>> weights;  // per layer [B, h, 1, L]
};

// input projection -> class attention stack -> norm -> MLP classifier.
// Parameter names: slu.input.*, slu.cls, slu.N.*, slu.norm.*, slu.hidden.*, slu.classify.*
template <typename T>
struct SluHead {
  SluConfig config;
  nn::Linear<T> input;
  nn::Tensor<T> cls;  // [1, d]
  std::vector<ClassAttentionLayer<T>> layers;
  nn::LayerNorm<T> final_norm;
  nn::Linear<T> hidden, classify;

  SluHead() = default;
  SluHead(const SluConfig& cfg, std::uint64_t seed);

  // x [B, L, input_dim] with valid[b*L + t].
  SluOutput<T> operator()(const nn::Tensor<T>& x, nn::ValidMask valid, const nn::ForwardContext& ctx) const;
  nn::ParameterList<T> parameters() const;
};

template <typename T>
struct ReprBatch {
  nn::Tensor<T> x;  // [B, L_max, width], zero padded
  std::vector<std::uint8_t> valid;
};

// Throws ShapeError on empty sequences or mixed widths.
template <typename T>
ReprBatch<T> collate_representations(const std::vector<const decoder::RepresentationSequence*>& items);

// Logits [B, bits] for frozen representations, without recording gradients.
std::vector<float> intent_forward(const SluHead<float>& head,
                                  const std::vector<const decoder::RepresentationSequence*>& items);

// Mean over every element of -[t log s(z) + (1 - t) log(1 - s(z))], in the
// softplus form max(z, 0) - t z + log(1 + exp(-|z|)).
template <typename T>
nn::Tensor<T> bce_loss(const nn::Tensor<T>& logits, const std::vector<std::uint8_t>& targets);

}  // namespace mslu::slu
