#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mslu/decoder/representations.hpp"
#include "mslu/encoder/model_config.hpp"
#include "mslu/features/mel.hpp"
#include "mslu/slu/head.hpp"
#include "mslu/train/archive.hpp"

namespace mslu::train {

struct TrainConfig {
  double rho = 0.3;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::size_t accum_steps = 8;
  double peak_lr = 0.4;
  std::size_t warmup_steps = 25000;
  std::string schedule = "noam";  // "noam" or "constant" (peak_lr throughout)
  double smoothing = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::string> freeze;  // parameter-name prefixes kept fixed
  std::size_t early_stop_patience = 10;
  double clip_norm = 0.0;  // 0 disables

  void validate() const;
  double learning_rate(std::size_t step) const;
};

TrainConfig pretrain_defaults();
// Constant LR 0.005, batch 512, 200 epochs, patience 10, backbone frozen.
TrainConfig slu_defaults();
// Constant LR 1e-4.
TrainConfig finetune_defaults();

// Strict JSON mapping: unknown keys and wrong types raise ConfigError.
Json to_json(const TrainConfig& c);
Json to_json(const encoder::ModelConfig& c);
Json to_json(const features::FeatureConfig& c);
Json to_json(const slu::SluConfig& c);
Json to_json(const decoder::ExtractOptions& c);
void from_json(const Json& j, TrainConfig& c);
void from_json(const Json& j, encoder::ModelConfig& c);
void from_json(const Json& j, features::FeatureConfig& c);
void from_json(const Json& j, slu::SluConfig& c);
void from_json(const Json& j, decoder::ExtractOptions& c);

// True when `name` equals a prefix or starts with prefix + ".".
bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes);

// Comma list of "decoder_lastK", "decoder", "encoder", "ctc" or "slu". The SLU
// head is always trainable. Returns the parameter-name prefixes left
// trainable; "encoder" throws ConfigError unless allow_encoder is set.
std::vector<std::string> unfreeze_prefixes(const std::string& spec, const encoder::ModelConfig& cfg,
                                           bool allow_encoder);

}  // namespace mslu::train
