#pragma once

#include <string>
#include <vector>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/features/manifest.hpp"
#include "mslu/features/mel.hpp"

namespace mslu::train {

struct Utterance {
  std::string id;
  features::FeatureSequence features;
  std::vector<std::string> words;
  features::Command intent;
};

// Loads every audio file and computes log-Mel features on `threads` workers.
// Output order follows the manifest.
std::vector<Utterance> load_utterances(const std::vector<features::ManifestEntry>& entries,
                                       const features::FeatureConfig& config, std::size_t threads = 1);

features::FeatureStats feature_stats(const std::vector<Utterance>& utterances);
void normalize(std::vector<Utterance>& utterances, const features::FeatureStats& stats);

std::vector<const features::FeatureSequence*> feature_views(const std::vector<Utterance>& utterances,
                                                            const std::vector<std::size_t>& indices);

std::vector<std::vector<int>> encode_transcripts(const std::vector<Utterance>& utterances,
                                                 const ctc::Vocabulary& vocab);

}  // namespace mslu::train
