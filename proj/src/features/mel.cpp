#include "mslu/features/mel.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "mslu/error.hpp"

namespace mslu::features {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t n_bins, std::size_t fft_size, int sample_rate_hz)
    : bins(n_bins), n_fft(fft_size) {
  if (n_bins < 1) throw ShapeError("mel filterbank: need at least one bin");
  const std::size_t K = spectrum_size();
  const double nyquist = sample_rate_hz / 2.0;
  const double top = hz_to_mel(nyquist);
  std::vector<double> edges(n_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_bins + 1));
  }
  weights.assign(n_bins * K, 0.0);
  centers_hz.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    centers_hz[b] = mid;
    for (std::size_t k = 0; k < K; ++k) {
      const double f = static_cast<double>(k) * sample_rate_hz / static_cast<double>(fft_size);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      weights[b * K + k] = w;
    }
  }
}

std::size_t frame_samples(double ms, int sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(ms * sample_rate_hz / 1000.0));
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t frame_count(std::size_t num_samples, std::size_t frame_len, std::size_t shift) {
  if (num_samples < frame_len) return 0;
  return 1 + (num_samples - frame_len) / shift;
}

FeatureSequence log_mel(const AudioSignal& signal, int mel_bins, double frame_length_ms,
                        double frame_shift_ms) {
  if (signal.sample_rate_hz <= 0) throw ShapeError("log_mel: sample rate must be positive");
  if (mel_bins < 1) throw ShapeError("log_mel: mel_bins must be >= 1");
  if (frame_shift_ms <= 0.0 || frame_length_ms < frame_shift_ms) {
    throw ShapeError("log_mel: need 0 < frame_shift <= frame_length");
  }
  if (signal.samples.empty()) throw DataError("log_mel: empty signal");
  const std::size_t len = frame_samples(frame_length_ms, signal.sample_rate_hz);
  const std::size_t shift = frame_samples(frame_shift_ms, signal.sample_rate_hz);
  if (len == 0 || shift == 0) throw ShapeError("log_mel: frame shorter than one sample");
  const std::size_t T = frame_count(signal.samples.size(), len, shift);
  if (T == 0) {
    throw DataError("log_mel: audio shorter than one frame (" +
                    std::to_string(signal.samples.size()) + " < " + std::to_string(len) +
                    " samples)");
  }

  const std::size_t n_fft = next_pow2(len);
  const MelFilterbank bank(static_cast<std::size_t>(mel_bins), n_fft, signal.sample_rate_hz);
  const std::size_t K = bank.spectrum_size();

  std::vector<double> window(len);
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(len - 1 > 0 ? len - 1 : 1));
  }

  FeatureSequence out;
  out.frames = T;
  out.bins = static_cast<std::size_t>(mel_bins);
  out.frame_length_ms = frame_length_ms;
  out.frame_shift_ms = frame_shift_ms;
  out.values.resize(T * out.bins);

  Eigen::FFT<double> fft;
  std::vector<double> frame(n_fft, 0.0);
  std::vector<std::complex<double>> spectrum;
  std::vector<double> magnitude(K);
  for (std::size_t t = 0; t < T; ++t) {
    const float* src = signal.samples.data() + t * shift;
    for (std::size_t i = 0; i < len; ++i) frame[i] = static_cast<double>(src[i]) * window[i];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < K; ++k) magnitude[k] = std::abs(spectrum[k]);
    for (std::size_t b = 0; b < out.bins; ++b) {
      const double* w = bank.weights.data() + b * K;
      double e = 0.0;
      for (std::size_t k = 0; k < K; ++k) e += w[k] * magnitude[k];
      out.values[t * out.bins + b] = static_cast<float>(std::log(std::max(e, kLogFloor)));
    }
  }
  return out;
}

FeatureSequence log_mel(const AudioSignal& signal, const FeatureConfig& config) {
  if (signal.sample_rate_hz != config.sample_rate_hz) {
    throw DataError("sample rate " + std::to_string(signal.sample_rate_hz) + " does not match " +
                    std::to_string(config.sample_rate_hz));
  }
  return log_mel(signal, config.mel_bins, config.frame_length_ms, config.frame_shift_ms);
}

void FeatureStats::apply(FeatureSequence& features) const {
  if (empty()) return;
  if (features.bins != mean.size()) throw ShapeError("feature stats: bin count mismatch");
  for (std::size_t t = 0; t < features.frames; ++t) {
    for (std::size_t b = 0; b < features.bins; ++b) {
      float& v = features.values[t * features.bins + b];
      v = (v - mean[b]) / stddev[b];
    }
  }
}

FeatureStats compute_stats(const std::vector<FeatureSequence>& corpus) {
  if (corpus.empty()) throw DataError("feature stats: empty corpus");
  const std::size_t F = corpus.front().bins;
  std::vector<double> sum(F, 0.0), sq(F, 0.0);
  double count = 0.0;
  for (const auto& seq : corpus) {
    if (seq.bins != F) throw ShapeError("feature stats: inconsistent bin counts");
    for (std::size_t t = 0; t < seq.frames; ++t) {
      for (std::size_t b = 0; b < F; ++b) {
        const double v = seq.values[t * F + b];
        sum[b] += v;
        sq[b] += v * v;
      }
    }
    count += static_cast<double>(seq.frames);
  }
  FeatureStats stats;
  stats.mean.resize(F);
  stats.stddev.resize(F);
  for (std::size_t b = 0; b < F; ++b) {
    const double m = sum[b] / count;
    const double var = std::max(sq[b] / count - m * m, 0.0);
    stats.mean[b] = static_cast<float>(m);
    stats.stddev[b] = static_cast<float>(std::max(std::sqrt(var), 1e-5));
  }
  return stats;
}

}  // namespace mslu::features
