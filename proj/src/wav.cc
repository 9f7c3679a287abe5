#include "sotkit/wav.h"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sotkit {

namespace {

uint32_t Le32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}
uint16_t Le16(const uint8_t* p) { return uint16_t(p[0] | p[1] << 8); }

void Put32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void Put16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

int16_t ToPcm(float x) {
  const float clamped = std::clamp(x, -1.0f, 1.0f);
  const long v = std::lround(clamped * 32768.0f);
  return static_cast<int16_t>(std::clamp(v, -32768L, 32767L));
}

}  // namespace

WavData ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("{}: cannot open WAV", path.string()));
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  const auto fail = [&](std::string_view why) {
    return ParseError(fmt::format("{}: {}", path.string(), why));
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  WavData out;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk = bytes.data() + pos;
    const uint32_t size = Le32(chunk + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      const uint16_t format = Le16(bytes.data() + body);
      const uint16_t channels = Le16(bytes.data() + body + 2);
      out.sample_rate = static_cast<int>(Le32(bytes.data() + body + 4));
      const uint16_t bits = Le16(bytes.data() + body + 14);
      if (format != 1 || bits != 16)
        throw fail("only 16-bit PCM is supported");
      if (channels != 1) throw fail("only mono audio is supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      out.samples.resize(size / 2);
      for (size_t i = 0; i < out.samples.size(); ++i) {
        const auto v = static_cast<int16_t>(Le16(bytes.data() + body + 2 * i));
        out.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw fail("no data chunk");
}

void WriteWav(const std::filesystem::path& path, const Waveform& samples,
              int sample_rate) {
  const auto data_bytes = static_cast<uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  Put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  Put32(out, 16);
  Put16(out, 1);  // PCM
  Put16(out, 1);  // mono
  Put32(out, static_cast<uint32_t>(sample_rate));
  Put32(out, static_cast<uint32_t>(sample_rate) * 2);
  Put16(out, 2);
  Put16(out, 16);
  out += "data";
  Put32(out, data_bytes);
  for (float x : samples) Put16(out, static_cast<uint16_t>(ToPcm(x)));

  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error(
        fmt::format("{}: cannot open for writing", path.string()));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f)
    throw std::runtime_error(fmt::format("{}: write failed", path.string()));
}

Waveform Quantize16(const Waveform& samples) {
  Waveform out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](float x) {
    return static_cast<float>(ToPcm(x)) / 32768.0f;
  });
  return out;
}

}  // namespace sotkit
