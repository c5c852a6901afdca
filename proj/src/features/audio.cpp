#include "mslu/features/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mslu/error.hpp"

namespace mslu::features {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put_u32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff), char(v >> 24)};
  out.write(b, 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}

}  // namespace

AudioSignal load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& what) {
    throw FormatError(path.string() + ": " + what);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail("not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  AudioSignal signal;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) fail("truncated fmt chunk");
      const std::uint16_t format = read_u16(bytes.data() + body);
      const std::uint16_t channels = read_u16(bytes.data() + body + 2);
      const std::uint32_t rate = read_u32(bytes.data() + body + 4);
      const std::uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1) fail("unsupported format tag " + std::to_string(format) + " (need PCM)");
      if (channels != 1) fail("unsupported channel count " + std::to_string(channels));
      if (bits != 16) fail("unsupported bit depth " + std::to_string(bits));
      if (rate == 0) fail("sample rate is zero");
      signal.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail("data chunk before fmt chunk");
      if (body + size > bytes.size()) fail("truncated data chunk");
      const std::size_t n = size / 2;
      if (n == 0) fail("zero-length payload");
      signal.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        signal.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return signal;
    }
    pos = body + size + (size & 1);
  }
  fail(have_fmt ? "missing data chunk" : "truncated header");
  return signal;
}

void write_wav(const std::filesystem::path& path, const AudioSignal& signal) {
  if (signal.sample_rate_hz <= 0) throw ShapeError("write_wav: sample rate must be positive");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (float s : signal.samples) {
    const double scaled = std::round(std::clamp(double(s), -1.0, 1.0) * 32768.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace mslu::features
