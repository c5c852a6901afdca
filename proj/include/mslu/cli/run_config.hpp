#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mslu/train/config.hpp"

namespace mslu::cli {

using train::Json;

struct CurveSettings {
  std::vector<std::size_t> sizes{1, 2, 4, 8, 16};
  std::size_t repeats = 3;
  bool per_combination = true;
};

struct SynthSettings {
  double token_duration_ms = 200.0;
  double noise_snr_db = 15.0;
  int speakers = 4;
};

// Everything a run depends on. One root seed drives every stage; the SLU
// input width and label count, and the model's vocabulary and Mel bins, are
// derived at run time and are not part of the document.
struct RunConfig {
  std::uint64_t seed = 0;
  features::FeatureConfig features;
  encoder::ModelConfig model;
  train::TrainConfig pretrain = train::pretrain_defaults();
  train::TrainConfig slu = train::slu_defaults();
  train::TrainConfig finetune = train::finetune_defaults();
  slu::SluConfig head;
  decoder::ExtractOptions representation;
  std::string unfreeze = "decoder_last4";
  CurveSettings curve;
  SynthSettings synth;

  // Stage configs with the root seed applied.
  train::TrainConfig stage(const train::TrainConfig& c) const;
  void validate() const;
};

Json to_json(const RunConfig& c);
// Strict: unknown keys and wrong types raise ConfigError. Missing keys keep
// their defaults.
RunConfig run_config_from_json(const Json& j);

// Sets the value at a dotted path ("pretrain.epochs") of a complete config
// document. The text is read as JSON when it parses, as a string otherwise.
// Throws ConfigError for paths that do not exist.
void apply_override(Json& doc, const std::string& path, const std::string& value);

// Defaults, then the file (if any), then the overrides in order.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

// Parses "1,2,4"; throws ConfigError on empty items or non-numbers.
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace mslu::cli
