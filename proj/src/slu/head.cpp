#include "mslu/slu/head.hpp"

#include <cmath>

#include "mslu/error.hpp"

namespace mslu::slu {

void SluConfig::validate() const {
  if (input_dim == 0 || d == 0 || heads == 0 || layers == 0 || ffn == 0 || hidden == 0 || bits == 0) {
    throw ConfigError("slu config: sizes must be positive");
  }
  if (d % heads != 0) throw ConfigError("slu config: d must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("slu config: dropout must lie in [0, 1)");
}

template <typename T>
ClassAttentionLayer<T>::ClassAttentionLayer(const SluConfig& cfg, std::mt19937_64& rng)
    : norm(cfg.d),
      ffn_norm(cfg.d),
      key(cfg.d, cfg.d, rng),
      value(cfg.d, cfg.d, rng),
      output(cfg.d, cfg.d, rng),
      ffn(cfg.d, cfg.ffn, cfg.dropout, rng),
      heads(cfg.heads) {}

template <typename T>
ClassAttentionResult<T> ClassAttentionLayer<T>::operator()(const nn::Tensor<T>& x, const nn::Tensor<T>& cls,
                                                           nn::ValidMask valid,
                                                           const nn::ForwardContext& ctx) const {
  const std::size_t B = x.dim(0), L = x.dim(1);
  for (std::size_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < L; ++t) any = any || valid[b * L + t];
    if (!any) throw ShapeError("class attention: every position of item " + std::to_string(b) + " is padded");
  }
  const auto xn = norm(x);
  const auto q = norm(cls);
  auto att = nn::scaled_dot_attention(q, key(xn), value(xn), valid, heads);
  auto c = nn::add(cls, output(att.output));
  c = nn::add(c, ffn(ffn_norm(c), ctx));
  return {c, att.weights};
}

template <typename T>
void ClassAttentionLayer<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  norm.collect(prefix + ".norm", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
  ffn_norm.collect(prefix + ".ffn_norm", out);
  ffn.collect(prefix + ".ffn", out);
}

template <typename T>
SluHead<T>::SluHead(const SluConfig& cfg, std::uint64_t seed) : config(cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  input = nn::Linear<T>(cfg.input_dim, cfg.d, rng);
  cls = nn::uniform_init<T>({1, cfg.d}, cfg.d, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i) layers.emplace_back(cfg, rng);
  final_norm = nn::LayerNorm<T>(cfg.d);
  hidden = nn::Linear<T>(cfg.d, cfg.hidden, rng);
  classify = nn::Linear<T>(cfg.hidden, cfg.bits, rng);
}

template <typename T>
SluOutput<T> SluHead<T>::operator()(const nn::Tensor<T>& x, nn::ValidMask valid,
                                    const nn::ForwardContext& ctx) const {
  if (x.rank() != 3 || x.dim(2) != config.input_dim) {
    throw ShapeError("slu head: expected input width " + std::to_string(config.input_dim) + ", got " +
                     nn::to_string(x.shape()));
  }
  const std::size_t B = x.dim(0);
  const auto h = nn::mask_time(input(x), valid);
  auto c = nn::repeat_batch(cls, B);
  SluOutput<T> out;
  for (const auto& layer : layers) {
    auto r = layer(h, c, valid, ctx);
    c = r.cls;
    out.weights.push_back(r.weights);
  }
  auto z = nn::relu(hidden(final_norm(c)));
  if (ctx.train && config.dropout > 0.0) {
    if (!ctx.rng) throw ShapeError("training forward pass needs an rng");
    z = nn::dropout(z, config.dropout, true, *ctx.rng);
  }
  out.logits = nn::reshape(classify(z), {B, config.bits});
  return out;
}

template <typename T>
nn::ParameterList<T> SluHead<T>::parameters() const {
  nn::ParameterList<T> out;
  input.collect("slu.input", out);
  out.push_back({"slu.cls", cls});
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect("slu." + std::to_string(i), out);
  final_norm.collect("slu.norm", out);
  hidden.collect("slu.hidden", out);
  classify.collect("slu.classify", out);
  return out;
}

template <typename T>
ReprBatch<T> collate_representations(const std::vector<const decoder::RepresentationSequence*>& items) {
  if (items.empty()) throw ShapeError("collate_representations: empty batch");
  const std::size_t w = items.front()->width;
  std::size_t L = 0;
  for (const auto* r : items) {
    if (r->length == 0) throw ShapeError("collate_representations: empty sequence");
    if (r->width != w) throw ShapeError("collate_representations: mixed widths");
    L = std::max(L, r->length);
  }
  const std::size_t B = items.size();
  nn::Buffer<T> x(B * L * w, T(0));
  std::vector<std::uint8_t> valid(B * L, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& v = items[b]->vectors;
    std::copy(v.begin(), v.begin() + items[b]->length * w, x.begin() + b * L * w);
    std::fill_n(valid.begin() + b * L, items[b]->length, 1);
  }
  return {nn::Tensor<T>::from({B, L, w}, std::move(x)), std::move(valid)};
}

std::vector<float> intent_forward(const SluHead<float>& head,
                                  const std::vector<const decoder::RepresentationSequence*>& items) {
  nn::NoGradGuard guard;
  const auto batch = collate_representations<float>(items);
  const auto out = head(batch.x, batch.valid, {});
  return {out.logits.data().begin(), out.logits.data().end()};
}

template <typename T>
nn::Tensor<T> bce_loss(const nn::Tensor<T>& logits, const std::vector<std::uint8_t>& targets) {
  if (logits.size() != targets.size()) {
    throw ShapeError("bce_loss: " + std::to_string(logits.size()) + " logits for " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t n = targets.size();
  const auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = z[i];
    total += std::max(zi, 0.0) - targets[i] * zi + std::log1p(std::exp(-std::abs(zi)));
  }
  auto result = nn::Tensor<T>::make_result({1}, {T(total / double(n))}, {logits.node_ptr()});
  nn::Node<T>* self = result.node();
  nn::Node<T>* zn = logits.node();
  nn::set_backward(result, [=, targets = targets] {
    const T g = self->grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T s = T(1) / (T(1) + std::exp(-zn->value[i]));
      zn->grad[i] += g * (s - T(targets[i]));
    }
  });
  return result;
}

template struct ClassAttentionLayer<float>;
template struct ClassAttentionLayer<double>;
template struct SluHead<float>;
template struct SluHead<double>;
template ReprBatch<float> collate_representations(const std::vector<const decoder::RepresentationSequence*>&);
template ReprBatch<double> collate_representations(const std::vector<const decoder::RepresentationSequence*>&);
template nn::Tensor<float> bce_loss(const nn::Tensor<float>&, const std::vector<std::uint8_t>&);
template nn::Tensor<double> bce_loss(const nn::Tensor<double>&, const std::vector<std::uint8_t>&);

}  // namespace mslu::slu
