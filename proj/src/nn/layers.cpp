#include "mslu/nn/layers.hpp"

#include <cmath>

namespace mslu::nn {

template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Buffer<T> values(numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(uniform_init<T>({out, in}, in, rng)), bias(uniform_init<T>({out}, in, rng)) {}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t d)
    : gain(Tensor<T>::full({d}, T(1), true)), bias(Tensor<T>::zeros({d}, true)) {}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(std::size_t d_model, std::size_t h, std::mt19937_64& rng)
    : query(d_model, d_model, rng),
      key(d_model, d_model, rng),
      value(d_model, d_model, rng),
      output(d_model, d_model, rng),
      heads(h) {
  if (h == 0 || d_model % h != 0) {
    throw ShapeError("attention: d_model " + std::to_string(d_model) + " not divisible by " +
                     std::to_string(h) + " heads");
  }
}

template <typename T>
AttentionResult<T> MultiHeadAttention<T>::operator()(const Tensor<T>& query_in,
                                                     const Tensor<T>& kv_in,
                                                     ValidMask key_valid) const {
  auto attended = scaled_dot_attention(query(query_in), key(kv_in), value(kv_in), key_valid, heads);
  return {output(attended.output), std::move(attended.weights)};
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

template <typename T>
FeedForward<T>::FeedForward(std::size_t d_model, std::size_t hidden, double p, std::mt19937_64& rng)
    : expand(d_model, hidden, rng), contract(hidden, d_model, rng), dropout(p) {}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x, const ForwardContext& ctx) const {
  auto h = relu(expand(x));
  if (ctx.train && dropout > 0.0) h = nn::dropout(h, dropout, true, *ctx.rng);
  return contract(h);
}

template <typename T>
void FeedForward<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  expand.collect(prefix + ".expand", out);
  contract.collect(prefix + ".contract", out);
}

template <typename T>
ConvFrontend<T>::ConvFrontend(std::size_t bins, std::size_t channels1, std::size_t channels2,
                              std::size_t d_model, std::mt19937_64& rng)
    : conv1_weight(uniform_init<T>({channels1, 3, 3, 1}, 9, rng)),
      conv1_bias(uniform_init<T>({channels1}, 9, rng)),
      conv2_weight(uniform_init<T>({channels2, 3, 3, channels1}, 9 * channels1, rng)),
      conv2_bias(uniform_init<T>({channels2}, 9 * channels1, rng)),
      project(subsampled_length(bins) * channels2, d_model, rng),
      mel_bins(bins) {}

template <typename T>
ConvFrontendOutput<T> ConvFrontend<T>::operator()(const Tensor<T>& features,
                                                  const std::vector<std::size_t>& lengths) const {
  if (features.rank() != 3 || features.dim(2) != mel_bins) {
    throw ShapeError("conv frontend: expected [B, T, " + std::to_string(mel_bins) + "], got " +
                     to_string(features.shape()));
  }
  const std::size_t B = features.dim(0), T0 = features.dim(1);
  if (T0 < 1) throw ShapeError("conv frontend: T must be >= 1");
  if (lengths.size() != B) throw ShapeError("conv frontend: lengths size mismatch");

  std::vector<std::size_t> len1(B), len2(B);
  for (std::size_t b = 0; b < B; ++b) {
    len1[b] = halve_ceil(lengths[b]);
    len2[b] = halve_ceil(len1[b]);
  }
  const std::size_t T1 = halve_ceil(T0), T2 = halve_ceil(T1);

  auto x = reshape(features, {B, T0, mel_bins, 1});
  // Padded frames must stay zero so valid outputs match an unpadded run.
  x = relu(conv2d_3x3_s2(x, conv1_weight, conv1_bias));
  x = mask_time(x, length_mask(len1, T1));
  x = relu(conv2d_3x3_s2(x, conv2_weight, conv2_bias));
  x = mask_time(x, length_mask(len2, T2));
  x = reshape(x, {B, T2, x.dim(2) * x.dim(3)});
  return {project(x), std::move(len2)};
}

template <typename T>
void ConvFrontend<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".conv1.weight", conv1_weight});
  out.push_back({prefix + ".conv1.bias", conv1_bias});
  out.push_back({prefix + ".conv2.weight", conv2_weight});
  out.push_back({prefix + ".conv2.bias", conv2_bias});
  project.collect(prefix + ".project", out);
}

std::vector<std::uint8_t> length_mask(const std::vector<std::size_t>& lengths, std::size_t max_len) {
  std::vector<std::uint8_t> mask(lengths.size() * max_len, 0);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    if (lengths[b] > max_len) throw ShapeError("length exceeds padded size");
    std::fill_n(mask.begin() + b * max_len, lengths[b], 1);
  }
  return mask;
}

template Tensor<float> uniform_init<float>(Shape, std::size_t, std::mt19937_64&);
template Tensor<double> uniform_init<double>(Shape, std::size_t, std::mt19937_64&);
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct ConvFrontend<float>;
template struct ConvFrontend<double>;

}  // namespace mslu::nn
