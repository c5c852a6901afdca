#pragma once

#include <filesystem>
#include <vector>

namespace mslu::features {

struct AudioSignal {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate_hz = 16000;
};

// 16-bit PCM mono WAV. Samples are scaled by 1/32768.
AudioSignal load_audio(const std::filesystem::path& path);

// Clips to [-1, 1] and writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const AudioSignal& signal);

}  // namespace mslu::features
