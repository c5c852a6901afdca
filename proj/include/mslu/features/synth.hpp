#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mslu/features/audio.hpp"
#include "mslu/features/grammar.hpp"

namespace mslu::features {

struct Tone {
  double base_hz = 0.0;
  std::vector<double> harmonics;  // amplitude of harmonic 1, 2, ...
};

struct SynthSpec {
  std::map<std::string, Tone> token_to_tone;
  double token_duration_ms = 200.0;
  double noise_snr_db = 15.0;
  std::uint64_t seed = 0;
  int sample_rate_hz = 16000;
  int speakers = 4;
  double pitch_spread = 0.02;  // speaker pitch factors lie in [1 - spread, 1 + spread]

  // Throws ConfigError when frequencies collide or parameters are out of range.
  void validate() const;
};

// Log-spaced base frequencies in token order, harmonic profiles drawn from seed.
SynthSpec make_synth_spec(const std::vector<std::string>& tokens, std::uint64_t seed,
                          double token_duration_ms = 200.0, double noise_snr_db = 15.0);

double speaker_pitch(const SynthSpec& spec, int speaker);

AudioSignal synth_utterance(const std::vector<std::string>& tokens, const SynthSpec& spec,
                            std::uint64_t rng_seed, double pitch_factor = 1.0);

struct CorpusResult {
  std::filesystem::path manifest;
  std::size_t utterances = 0;
};

// Writes out_dir/audio/*.wav and out_dir/manifest.jsonl. Combinations are
// drawn as consecutive shuffled passes over the valid set, so every combination
// appears once n reaches the valid-set size; templates and speakers are drawn
// uniformly. Utterance i uses seed + i for its audio.
CorpusResult synth_corpus(const CommandGrammar& grammar, const SynthSpec& spec,
                          std::size_t n_utterances, std::uint64_t seed,
                          const std::filesystem::path& out_dir,
                          const std::string& id_prefix = "utt");

}  // namespace mslu::features
