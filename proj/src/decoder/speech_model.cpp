#include "mslu/decoder/speech_model.hpp"

#include <algorithm>
#include <random>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/error.hpp"

namespace mslu::decoder {

namespace {

// Disjoint init substreams keep each part's values independent of the others' sizes.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{seed, tag};
  return std::mt19937_64(seq);
}

}  // namespace

template <typename T>
SpeechModel<T>::SpeechModel(const encoder::ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  cfg.validate();
  auto enc_rng = substream(seed, 1);
  auto ctc_rng = substream(seed, 2);
  auto dec_rng = substream(seed, 3);
  encoder = encoder::Encoder<T>(cfg, enc_rng);
  ctc_head = nn::Linear<T>(cfg.d_model, cfg.vocab, ctc_rng);
  decoder = Decoder<T>(cfg, dec_rng);
}

template <typename T>
nn::ParameterList<T> SpeechModel<T>::parameters() const {
  nn::ParameterList<T> out;
  encoder.collect("encoder", out);
  ctc_head.collect("ctc", out);
  decoder.collect("decoder", out);
  return out;
}

template <typename T>
nn::Tensor<T> SpeechModel<T>::ctc_log_probs(const encoder::EncoderOutput<T>& enc) const {
  return nn::log_softmax(ctc_head(enc.h_enc));
}

template <typename T>
FeatureBatch<T> collate(const std::vector<const features::FeatureSequence*>& items) {
  if (items.empty()) throw ShapeError("collate: empty batch");
  const std::size_t F = items.front()->bins;
  std::size_t T_max = 0;
  for (const auto* f : items) {
    if (f->bins != F) throw ShapeError("collate: inconsistent mel bins");
    if (f->frames == 0) throw ShapeError("collate: empty feature sequence");
    T_max = std::max(T_max, f->frames);
  }
  FeatureBatch<T> out;
  nn::Buffer<T> values(items.size() * T_max * F, T(0));
  for (std::size_t b = 0; b < items.size(); ++b) {
    std::copy(items[b]->values.begin(), items[b]->values.end(), values.begin() + b * T_max * F);
    out.lengths.push_back(items[b]->frames);
  }
  out.features = nn::Tensor<T>::from({items.size(), T_max, F}, std::move(values));
  return out;
}

std::vector<int> pad_tokens(const std::vector<std::vector<int>>& seqs, std::size_t& length) {
  length = 0;
  for (const auto& s : seqs) length = std::max(length, s.size());
  std::vector<int> ids(seqs.size() * length, ctc::Vocabulary::kPad);
  for (std::size_t b = 0; b < seqs.size(); ++b) std::copy(seqs[b].begin(), seqs[b].end(), ids.begin() + b * length);
  return ids;
}

template <typename T>
std::vector<T> item_rows(const nn::Tensor<T>& x, std::size_t b, std::size_t len) {
  const std::size_t L = x.dim(1), d = x.dim(2);
  if (len > L) throw ShapeError("item_rows: length exceeds padded size");
  auto first = x.data().begin() + static_cast<std::ptrdiff_t>(b * L * d);
  return {first, first + static_cast<std::ptrdiff_t>(len * d)};
}

encoder::EncoderOutput<float> batch_encodings(const std::vector<const EncodingCache*>& items, std::size_t d) {
  if (items.empty()) throw ShapeError("batch_encodings: empty batch");
  std::size_t T_max = 0;
  for (const auto* e : items) T_max = std::max(T_max, e->frames);
  std::vector<float> h(items.size() * T_max * d, 0.0f);
  encoder::EncoderOutput<float> out;
  for (std::size_t b = 0; b < items.size(); ++b) {
    if (items[b]->h.size() != items[b]->frames * d) throw ShapeError("batch_encodings: width mismatch");
    std::copy(items[b]->h.begin(), items[b]->h.end(), h.begin() + b * T_max * d);
    out.lengths.push_back(items[b]->frames);
  }
  out.h_enc = nn::Tensor<float>::from({items.size(), T_max, d}, std::move(h));
  out.valid = nn::length_mask(out.lengths, T_max);
  return out;
}

template struct SpeechModel<float>;
template struct SpeechModel<double>;
template FeatureBatch<float> collate(const std::vector<const features::FeatureSequence*>&);
template FeatureBatch<double> collate(const std::vector<const features::FeatureSequence*>&);
template std::vector<float> item_rows(const nn::Tensor<float>&, std::size_t, std::size_t);
template std::vector<double> item_rows(const nn::Tensor<double>&, std::size_t, std::size_t);

}  // namespace mslu::decoder
