#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "mslu/nn/tensor.hpp"

// Differentiable primitives. Every op treats the last axis as the feature
// axis and flattens the leading axes into rows.
namespace mslu::nn {

using ValidMask = std::span<const std::uint8_t>;

// y = x W^T + b over the last axis. `bias` may be an undefined tensor.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x);

template <typename T>
struct AttentionResult {
  Tensor<T> output;   // [B, Lq, d], heads concatenated
  Tensor<T> weights;  // [B, h, Lq, Lk], the exact buffer used by the forward pass
};

// Scaled dot-product attention on already projected q [B,Lq,d], k/v [B,Lk,d].
// Keys with key_valid[b*Lk + j] == 0 receive weight exactly 0.
template <typename T>
AttentionResult<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                                        const Tensor<T>& v, ValidMask key_valid,
                                        std::size_t heads);

// 3x3 convolution, stride 2, zero padding 1, channels-last layout.
// x [B,H,W,Cin], weight [Cout,3,3,Cin], bias [Cout] -> [B,ceil(H/2),ceil(W/2),Cout].
template <typename T>
Tensor<T> conv2d_3x3_s2(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Zeroes positions [b, t, ...] where valid[b*L + t] == 0 (x has shape [B, L, ...]).
template <typename T>
Tensor<T> mask_time(const Tensor<T>& x, ValidMask valid);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Row lookup; result shape = ids_shape + [d].
template <typename T>
Tensor<T> embedding(std::span<const int> ids, const Shape& ids_shape, const Tensor<T>& table);

// Inverted dropout. Identity in eval mode or when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, std::mt19937_64& rng);

// [...] -> [batch, ...], gradient summed over the copies.
template <typename T>
Tensor<T> repeat_batch(const Tensor<T>& x, std::size_t batch);

}  // namespace mslu::nn
