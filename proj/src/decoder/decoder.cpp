#include "mslu/decoder/decoder.hpp"

#include <cmath>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/error.hpp"

namespace mslu::decoder {

using encoder::residual;

std::vector<double> sinusoidal_encoding(std::size_t length, std::size_t d) {
  std::vector<double> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * rate;
      pe[pos * d + i] = i % 2 == 0 ? std::sin(a) : std::cos(a);
    }
  }
  return pe;
}

template <typename T>
DecoderBlock<T>::DecoderBlock(const encoder::ModelConfig& cfg, std::mt19937_64& rng)
    : self_norm(cfg.d_model),
      cross_norm(cfg.d_model),
      ffn_norm(cfg.d_model),
      self_attn(cfg.d_model, cfg.heads, rng),
      cross_attn(cfg.d_model, cfg.heads, rng),
      ffn(cfg.d_model, cfg.ffn, cfg.dropout, rng),
      dropout(cfg.dropout),
      post_norm(cfg.post_norm) {}

template <typename T>
void DecoderBlock<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  self_norm.collect(prefix + ".self_norm", out);
  self_attn.collect(prefix + ".self_attn", out);
  cross_norm.collect(prefix + ".cross_norm", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  ffn_norm.collect(prefix + ".ffn_norm", out);
  ffn.collect(prefix + ".ffn", out);
}

template <typename T>
Decoder<T>::Decoder(const encoder::ModelConfig& cfg, std::mt19937_64& rng)
    : final_norm(cfg.d_model), dropout(cfg.dropout), post_norm(cfg.post_norm) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  nn::Buffer<T> table(cfg.vocab * cfg.d_model);
  for (auto& v : table) v = static_cast<T>(dist(rng));
  embed = nn::Tensor<T>::from({cfg.vocab, cfg.d_model}, std::move(table), true);
  blocks.reserve(cfg.dec_layers);
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) blocks.emplace_back(cfg, rng);
  output = nn::Linear<T>(cfg.d_model, cfg.vocab, rng);
}

template <typename T>
DecoderOutput<T> Decoder<T>::operator()(const std::vector<int>& ids, std::size_t batch,
                                        std::size_t length, const encoder::EncoderOutput<T>& enc,
                                        const nn::ForwardContext& ctx, bool keep_weights) const {
  if (length == 0) throw ShapeError("decode_forward: empty hypothesis");
  if (ids.size() != batch * length) throw ShapeError("decode_forward: ids size mismatch");
  if (enc.batch() != batch) throw ShapeError("decode_forward: encoder batch mismatch");
  const std::size_t V = embed.dim(0), d = embed.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw ShapeError("decode_forward: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(V));
    }
  }

  DecoderOutput<T> out;
  out.valid.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.valid[i] = ids[i] != ctc::Vocabulary::kPad;

  auto x = nn::scale(nn::embedding<T>(ids, {batch, length}, embed), static_cast<T>(std::sqrt(double(d))));
  const auto pe = sinusoidal_encoding(length, d);
  nn::Buffer<T> pe_batch(batch * length * d);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < length * d; ++i) pe_batch[b * length * d + i] = static_cast<T>(pe[i]);
  x = nn::add(x, nn::Tensor<T>::from({batch, length, d}, std::move(pe_batch)));

  for (const auto& blk : blocks) {
    nn::AttentionResult<T> self, cross;
    if (post_norm) {
      self = blk.self_attn(x, x, out.valid);
      x = blk.self_norm(residual(x, self.output, dropout, ctx));
      cross = blk.cross_attn(x, enc.h_enc, enc.valid);
      x = blk.cross_norm(residual(x, cross.output, dropout, ctx));
      x = blk.ffn_norm(residual(x, blk.ffn(x, ctx), dropout, ctx));
    } else {
      auto n = blk.self_norm(x);
      self = blk.self_attn(n, n, out.valid);
      x = residual(x, self.output, dropout, ctx);
      cross = blk.cross_attn(blk.cross_norm(x), enc.h_enc, enc.valid);
      x = residual(x, cross.output, dropout, ctx);
      x = residual(x, blk.ffn(blk.ffn_norm(x), ctx), dropout, ctx);
    }
    out.layer_states.push_back(x);
    if (keep_weights) {
      out.self_weights.push_back(self.weights);
      out.cross_weights.push_back(cross.weights);
    }
  }
  out.logits = output(post_norm ? x : final_norm(x));
  return out;
}

template <typename T>
void Decoder<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  out.push_back({prefix + ".embed", embed});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + "." + std::to_string(i), out);
  if (!post_norm) final_norm.collect(prefix + ".norm", out);
  output.collect(prefix + ".output", out);
}

template struct DecoderBlock<float>;
template struct DecoderBlock<double>;
template struct Decoder<float>;
template struct Decoder<double>;

}  // namespace mslu::decoder
