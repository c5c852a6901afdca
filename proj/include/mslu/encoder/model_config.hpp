#pragma once

#include <cstddef>

namespace mslu::encoder {

struct ModelConfig {
  std::size_t enc_layers = 12;
  std::size_t dec_layers = 6;
  std::size_t heads = 4;
  std::size_t d_model = 256;
  std::size_t ffn = 2048;
  double dropout = 0.1;
  std::size_t vocab = 5000;
  std::size_t mel_bins = 80;
  std::size_t conv_channels1 = 64;
  std::size_t conv_channels2 = 128;
  // Literal "sublayer, residual, then layer norm" ordering instead of pre-norm.
  bool post_norm = false;

  // Throws ConfigError.
  void validate() const;
};

}  // namespace mslu::encoder
