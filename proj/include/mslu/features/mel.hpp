#pragma once

#include <cstddef>
#include <vector>

#include "mslu/features/audio.hpp"

namespace mslu::features {

struct FeatureConfig {
  int mel_bins = 80;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  int sample_rate_hz = 16000;
};

// Row-major T x F matrix of log-Mel energies.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> values;
  double frame_length_ms = 0.0;
  double frame_shift_ms = 0.0;

  float at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

inline constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK filters spanning 0 Hz to Nyquist, unnormalized area.
// weights[b * (n_fft/2 + 1) + k] is filter b's response at FFT bin k.
struct MelFilterbank {
  std::size_t bins = 0;
  std::size_t n_fft = 0;
  std::vector<double> weights;
  std::vector<double> centers_hz;

  MelFilterbank(std::size_t bins, std::size_t n_fft, int sample_rate_hz);
  std::size_t spectrum_size() const { return n_fft / 2 + 1; }
};

std::size_t frame_samples(double ms, int sample_rate_hz);
std::size_t next_pow2(std::size_t n);
std::size_t frame_count(std::size_t num_samples, std::size_t frame_len, std::size_t shift);

// Hann window, magnitude spectrum of the next power-of-two FFT, mel weighting,
// natural log floored at log(1e-10).
FeatureSequence log_mel(const AudioSignal& signal, int mel_bins, double frame_length_ms,
                        double frame_shift_ms);
FeatureSequence log_mel(const AudioSignal& signal, const FeatureConfig& config);

// Per-bin mean and standard deviation over a corpus.
struct FeatureStats {
  std::vector<float> mean;
  std::vector<float> stddev;

  bool empty() const { return mean.empty(); }
  void apply(FeatureSequence& features) const;
};

FeatureStats compute_stats(const std::vector<FeatureSequence>& corpus);

}  // namespace mslu::features
