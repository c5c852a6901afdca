#include "mslu/features/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "mslu/error.hpp"
#include "mslu/features/manifest.hpp"

namespace mslu::features {

namespace {

constexpr double kLowHz = 250.0;
constexpr double kHighHz = 3200.0;
constexpr double kEdgeMs = 10.0;
constexpr double kPeak = 0.3;

}  // namespace

void SynthSpec::validate() const {
  if (token_to_tone.empty()) throw ConfigError("synth spec has no tones");
  if (!(token_duration_ms > 0.0)) throw ConfigError("token_duration_ms must be positive");
  if (sample_rate_hz <= 0) throw ConfigError("sample_rate_hz must be positive");
  if (speakers < 1) throw ConfigError("speakers must be >= 1");
  if (pitch_spread < 0.0 || pitch_spread >= 0.5) throw ConfigError("pitch_spread must be in [0, 0.5)");
  std::set<double> freqs;
  for (const auto& [token, tone] : token_to_tone) {
    if (!(tone.base_hz > 0.0) || tone.base_hz >= sample_rate_hz / 2.0) {
      throw ConfigError("tone for '" + token + "' outside (0, Nyquist)");
    }
    if (tone.harmonics.empty()) throw ConfigError("tone for '" + token + "' has no harmonics");
    if (!freqs.insert(tone.base_hz).second) {
      throw ConfigError("tone for '" + token + "' shares its base frequency with another token");
    }
  }
}

SynthSpec make_synth_spec(const std::vector<std::string>& tokens, std::uint64_t seed,
                          double token_duration_ms, double noise_snr_db) {
  if (tokens.empty()) throw ConfigError("make_synth_spec: no tokens");
  SynthSpec spec;
  spec.seed = seed;
  spec.token_duration_ms = token_duration_ms;
  spec.noise_snr_db = noise_snr_db;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> h2(0.2, 0.7), h3(0.05, 0.4);
  const double n = static_cast<double>(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double frac = tokens.size() > 1 ? static_cast<double>(i) / (n - 1.0) : 0.0;
    Tone tone;
    tone.base_hz = kLowHz * std::pow(kHighHz / kLowHz, frac);
    tone.harmonics = {1.0, h2(rng), h3(rng)};
    if (!spec.token_to_tone.emplace(tokens[i], std::move(tone)).second) {
      throw ConfigError("make_synth_spec: duplicate token '" + tokens[i] + "'");
    }
  }
  spec.validate();
  return spec;
}

double speaker_pitch(const SynthSpec& spec, int speaker) {
  if (spec.speakers <= 1) return 1.0;
  const double frac = static_cast<double>(speaker) / static_cast<double>(spec.speakers - 1);
  return 1.0 - spec.pitch_spread + 2.0 * spec.pitch_spread * frac;
}

AudioSignal synth_utterance(const std::vector<std::string>& tokens, const SynthSpec& spec,
                            std::uint64_t rng_seed, double pitch_factor) {
  if (tokens.empty()) throw DataError("synth_utterance: empty token sequence");
  const int sr = spec.sample_rate_hz;
  const auto seg = static_cast<std::size_t>(std::llround(spec.token_duration_ms * sr / 1000.0));
  if (seg == 0) throw ConfigError("token duration shorter than one sample");
  const std::size_t edge = std::min(seg / 2, static_cast<std::size_t>(kEdgeMs * sr / 1000.0));

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> gain(0.7, 1.0);

  std::vector<double> clean(seg * tokens.size(), 0.0);
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    auto it = spec.token_to_tone.find(tokens[k]);
    if (it == spec.token_to_tone.end()) throw DataError("synth_utterance: no tone for '" + tokens[k] + "'");
    const Tone& tone = it->second;
    const double amp = kPeak * gain(rng) /
                       std::accumulate(tone.harmonics.begin(), tone.harmonics.end(), 0.0);
    double* out = clean.data() + k * seg;
    for (std::size_t h = 0; h < tone.harmonics.size(); ++h) {
      const double f = tone.base_hz * pitch_factor * static_cast<double>(h + 1);
      const double ph = phase(rng);
      if (f >= 0.45 * sr) continue;
      const double w = 2.0 * std::numbers::pi * f / sr;
      for (std::size_t i = 0; i < seg; ++i) {
        out[i] += amp * tone.harmonics[h] * std::sin(w * static_cast<double>(i) + ph);
      }
    }
    for (std::size_t i = 0; i < edge; ++i) {
      const double ramp = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / edge);
      out[i] *= ramp;
      out[seg - 1 - i] *= ramp;
    }
  }

  double power = 0.0;
  for (double v : clean) power += v * v;
  const double rms = std::sqrt(power / static_cast<double>(clean.size()));
  std::normal_distribution<double> noise(0.0, rms / std::pow(10.0, spec.noise_snr_db / 20.0));

  AudioSignal signal;
  signal.sample_rate_hz = sr;
  signal.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    signal.samples[i] = static_cast<float>(std::clamp(clean[i] + noise(rng), -1.0, 1.0));
  }
  return signal;
}

CorpusResult synth_corpus(const CommandGrammar& grammar, const SynthSpec& spec,
                          std::size_t n_utterances, std::uint64_t seed,
                          const std::filesystem::path& out_dir, const std::string& id_prefix) {
  if (n_utterances < 1) throw ConfigError("synth_corpus: n_utterances must be >= 1");
  spec.validate();
  const auto combos = grammar.combinations();
  if (combos.empty()) throw DataError("synth_corpus: grammar has no valid combinations");
  for (const auto& t : grammar.terminals()) {
    if (!spec.token_to_tone.count(t)) throw ConfigError("synth spec has no tone for '" + t + "'");
  }

  std::filesystem::create_directories(out_dir / "audio");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(combos.size());
  std::vector<ManifestEntry> entries;
  entries.reserve(n_utterances);
  for (std::size_t i = 0; i < n_utterances; ++i) {
    if (i % combos.size() == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
    }
    const Command& cmd = combos[order[i % combos.size()]];
    const auto& templates = grammar.action(cmd.action).templates;
    const std::size_t tpl = std::uniform_int_distribution<std::size_t>(0, templates.size() - 1)(rng);
    const int speaker = std::uniform_int_distribution<int>(0, spec.speakers - 1)(rng);
    const auto tokens = grammar.expand(cmd, tpl);

    char name[64];
    std::snprintf(name, sizeof name, "%s%05zu", id_prefix.c_str(), i);
    const auto wav = out_dir / "audio" / (std::string(name) + ".wav");
    write_wav(wav, synth_utterance(tokens, spec, seed + i, speaker_pitch(spec, speaker)));
    entries.push_back({name, wav, join_tokens(tokens), cmd, "spk" + std::to_string(speaker)});
  }
  CorpusResult result{out_dir / "manifest.jsonl", entries.size()};
  write_manifest(result.manifest, entries);
  return result;
}

}  // namespace mslu::features
