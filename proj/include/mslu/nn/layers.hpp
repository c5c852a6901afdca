#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mslu/nn/ops.hpp"
#include "mslu/nn/tensor.hpp"

namespace mslu::nn {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

// Per-call state shared by every layer of one forward pass.
struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // dropout source; required when train is set
};

// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d);

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Projects query/key/value inputs, attends per head, concatenates and projects.
template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, std::mt19937_64& rng);

  AttentionResult<T> operator()(const Tensor<T>& query_in, const Tensor<T>& kv_in,
                                ValidMask key_valid) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct FeedForward {
  Linear<T> expand, contract;
  double dropout = 0.0;

  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t hidden, double dropout, std::mt19937_64& rng);

  Tensor<T> operator()(const Tensor<T>& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct ConvFrontendOutput {
  Tensor<T> x;                        // [B, T', d_model]
  std::vector<std::size_t> lengths;   // valid T' per utterance
};

// Two 3x3 stride-2 convolutions with ReLU, then a linear map of the flattened
// (frequency x channel) axis to d_model. Time and frequency shrink by ~4.
template <typename T>
struct ConvFrontend {
  Tensor<T> conv1_weight, conv1_bias, conv2_weight, conv2_bias;
  Linear<T> project;
  std::size_t mel_bins = 0;

  ConvFrontend() = default;
  ConvFrontend(std::size_t mel_bins, std::size_t channels1, std::size_t channels2,
               std::size_t d_model, std::mt19937_64& rng);

  // features [B, T, F], lengths in frames.
  ConvFrontendOutput<T> operator()(const Tensor<T>& features,
                                   const std::vector<std::size_t>& lengths) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// ceil(n / 2), the stride-2 same-padding output length.
constexpr std::size_t halve_ceil(std::size_t n) { return (n + 1) / 2; }
constexpr std::size_t subsampled_length(std::size_t n) { return halve_ceil(halve_ceil(n)); }

// valid[b*L + t] = t < lengths[b].
std::vector<std::uint8_t> length_mask(const std::vector<std::size_t>& lengths, std::size_t max_len);

template <typename T>
std::size_t parameter_count(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

}  // namespace mslu::nn
