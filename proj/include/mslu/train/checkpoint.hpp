#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/decoder/speech_model.hpp"
#include "mslu/slu/head.hpp"
#include "mslu/slu/schema.hpp"
#include "mslu/train/config.hpp"
#include "mslu/train/optim.hpp"

namespace mslu::train {

struct SpeechBundle {
  decoder::SpeechModel<float> model;
  ctc::Vocabulary vocab;
  features::FeatureConfig features;
  features::FeatureStats stats;
};

// Sets cfg.vocab and cfg.mel_bins from the vocabulary and feature settings.
SpeechBundle make_speech_bundle(encoder::ModelConfig cfg, ctc::Vocabulary vocab,
                                const features::FeatureConfig& features, features::FeatureStats stats,
                                std::uint64_t seed);

struct SluBundle {
  slu::SluHead<float> head;
  slu::IntentSchema schema;
  decoder::ExtractOptions extract;
};

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // optimizer updates
  double best = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
};

struct OptimizerState {
  std::size_t steps = 0;
  std::vector<std::string> names;
  std::vector<std::vector<float>> m, v;

  bool empty() const { return names.empty(); }
};

OptimizerState capture(Adam& adam);
// Matches buffers by parameter name; throws FormatError on a mismatch.
void restore(Adam& adam, const OptimizerState& state);

// Any combination of speech model and SLU head, plus training bookkeeping.
struct Checkpoint {
  std::optional<SpeechBundle> speech;
  std::optional<SluBundle> slu;
  TrainConfig train;
  TrainState state;
  OptimizerState optimizer;
  Json metrics = Json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Json to_json(const slu::IntentSchema& schema);
slu::IntentSchema schema_from_json(const Json& j);

}  // namespace mslu::train
