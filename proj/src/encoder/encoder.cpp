#include "mslu/encoder/encoder.hpp"

#include "mslu/error.hpp"

namespace mslu::encoder {

void ModelConfig::validate() const {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("model config: ") + what);
  };
  need(enc_layers >= 1, "enc_layers must be >= 1");
  need(dec_layers >= 1, "dec_layers must be >= 1");
  need(heads >= 1 && d_model >= 1, "heads and d_model must be positive");
  need(d_model % heads == 0, "d_model must be divisible by heads");
  need(ffn >= 1, "ffn must be >= 1");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  need(vocab > 4, "vocab must exceed the 4 reserved ids");
  need(mel_bins >= 1, "mel_bins must be >= 1");
  need(conv_channels1 >= 1 && conv_channels2 >= 1, "conv channels must be positive");
}

template <typename T>
nn::Tensor<T> residual(const nn::Tensor<T>& x, const nn::Tensor<T>& y, double p,
                       const nn::ForwardContext& ctx) {
  if (ctx.train && p > 0.0) {
    if (!ctx.rng) throw ShapeError("training forward pass needs an rng");
    return nn::add(x, nn::dropout(y, p, true, *ctx.rng));
  }
  return nn::add(x, y);
}

template <typename T>
EncoderBlock<T>::EncoderBlock(const ModelConfig& cfg, std::mt19937_64& rng)
    : attn_norm(cfg.d_model),
      ffn_norm(cfg.d_model),
      attn(cfg.d_model, cfg.heads, rng),
      ffn(cfg.d_model, cfg.ffn, cfg.dropout, rng),
      dropout(cfg.dropout),
      post_norm(cfg.post_norm) {}

template <typename T>
nn::Tensor<T> EncoderBlock<T>::operator()(const nn::Tensor<T>& x, nn::ValidMask valid,
                                          const nn::ForwardContext& ctx) const {
  if (post_norm) {
    auto h = attn_norm(residual(x, attn(x, x, valid).output, dropout, ctx));
    return ffn_norm(residual(h, ffn(h, ctx), dropout, ctx));
  }
  auto n = attn_norm(x);
  auto h = residual(x, attn(n, n, valid).output, dropout, ctx);
  return residual(h, ffn(ffn_norm(h), ctx), dropout, ctx);
}

template <typename T>
void EncoderBlock<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  attn_norm.collect(prefix + ".attn_norm", out);
  attn.collect(prefix + ".attn", out);
  ffn_norm.collect(prefix + ".ffn_norm", out);
  ffn.collect(prefix + ".ffn", out);
}

template <typename T>
Encoder<T>::Encoder(const ModelConfig& cfg, std::mt19937_64& rng)
    : frontend(cfg.mel_bins, cfg.conv_channels1, cfg.conv_channels2, cfg.d_model, rng),
      final_norm(cfg.d_model),
      post_norm(cfg.post_norm) {
  blocks.reserve(cfg.enc_layers);
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) blocks.emplace_back(cfg, rng);
}

template <typename T>
EncoderOutput<T> Encoder<T>::operator()(const nn::Tensor<T>& features,
                                        const std::vector<std::size_t>& lengths,
                                        const nn::ForwardContext& ctx, bool keep_layers) const {
  if (features.rank() != 3 || features.dim(0) == 0) throw ShapeError("encode: empty batch");
  for (std::size_t len : lengths) {
    if (len == 0 || len > features.dim(1)) {
      throw ShapeError("encode: length " + std::to_string(len) + " outside [1, " +
                       std::to_string(features.dim(1)) + "]");
    }
  }
  auto front = frontend(features, lengths);
  EncoderOutput<T> out;
  out.lengths = std::move(front.lengths);
  out.valid = nn::length_mask(out.lengths, front.x.dim(1));
  auto x = front.x;
  for (const auto& block : blocks) {
    x = block(x, out.valid, ctx);
    if (keep_layers) out.layer_states.push_back(x);
  }
  out.h_enc = post_norm ? x : final_norm(x);
  return out;
}

template <typename T>
void Encoder<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  frontend.collect(prefix + ".frontend", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + "." + std::to_string(i), out);
  if (!post_norm) final_norm.collect(prefix + ".norm", out);
}

template nn::Tensor<float> residual(const nn::Tensor<float>&, const nn::Tensor<float>&, double,
                                    const nn::ForwardContext&);
template nn::Tensor<double> residual(const nn::Tensor<double>&, const nn::Tensor<double>&, double,
                                     const nn::ForwardContext&);
template struct EncoderBlock<float>;
template struct EncoderBlock<double>;
template struct Encoder<float>;
template struct Encoder<double>;

}  // namespace mslu::encoder
