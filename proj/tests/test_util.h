#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <filesystem>
#include <string>
#include <vector>

#include "sotkit/core.h"
#include "sotkit/css.h"
#include "sotkit/rng.h"

namespace sotkit::testing {

inline std::filesystem::path FixturePath(const std::string& name) {
  return std::filesystem::path(SOTKIT_FIXTURE_DIR) / name;
}

inline TimedToken TokenMs(std::string text, int64_t start_ms, int64_t end_ms) {
  return {std::move(text), Time::FromMicros(start_ms * 1000),
          Time::FromMicros(end_ms * 1000)};
}

// Track of `n` tokens on a 10 ms grid starting at `first_ms`. Gaps between
// tokens are drawn from [min_gap_ms, max_gap_ms].
inline SpeakerTrack RandomTrack(CounterRng& rng, std::string speaker_id,
                                size_t n, int64_t first_ms = 0,
                                int64_t min_gap_ms = 0,
                                int64_t max_gap_ms = 800) {
  static const char* kVocab[] = {"a", "b", "c", "d", "e", "f"};
  SpeakerTrack track{std::move(speaker_id), {}};
  int64_t t = first_ms;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0)
      t += min_gap_ms + 10 * int64_t(rng.Below((max_gap_ms - min_gap_ms) / 10 + 1));
    const int64_t len = 10 * (1 + int64_t(rng.Below(60)));
    track.tokens.push_back(TokenMs(kVocab[rng.Below(6)], t, t + len));
    t += len;
  }
  return track;
}

// 1..max_speakers speakers, 1..max_tokens tokens each, random offsets.
inline Session RandomSession(CounterRng& rng, size_t max_speakers = 4,
                             size_t max_tokens = 8) {
  Session s;
  s.session_id = "rand";
  const size_t speakers = 1 + rng.Below(max_speakers);
  for (size_t k = 0; k < speakers; ++k)
    s.tracks.push_back(RandomTrack(rng, "s" + std::to_string(k),
                                   1 + rng.Below(max_tokens),
                                   10 * int64_t(rng.Below(300))));
  return s;
}

// Words of each track, in track order.
inline std::vector<std::vector<std::string>> TrackWords(const Session& s) {
  std::vector<std::vector<std::string>> out;
  for (const auto& t : s.tracks) {
    out.emplace_back();
    for (const auto& tok : t.tokens) out.back().push_back(tok.text);
  }
  return out;
}

// Two tone sources at 16 kHz for separation tests. Source A is active on
// [0, a_end), source B on [b_start, end) with at least 1 s of shared
// activity, so every chunk overlap carries a speaker that pins the channel
// order.
struct TwoSources {
  Waveform a, b, mixture;
};

inline TwoSources RandomTwoSources(CounterRng& rng, double min_s = 6.0,
                                   double max_s = 10.0) {
  constexpr int kRate = 16000;
  const double dur = rng.Uniform(min_s, max_s);
  const size_t n = static_cast<size_t>(dur * kRate);
  const size_t b_start = static_cast<size_t>(rng.Uniform(0.0, 0.4) * double(n));
  const size_t a_end =
      std::min(n, b_start + kRate + static_cast<size_t>(rng.Uniform(0.0, 1.0) *
                                                        double(n - b_start)));
  const double fa = rng.Uniform(100.0, 1000.0), fb = rng.Uniform(100.0, 1000.0);
  const double ga = rng.Uniform(0.1, 0.45), gb = rng.Uniform(0.1, 0.45);
  TwoSources out;
  out.a.assign(n, 0.0f);
  out.b.assign(n, 0.0f);
  out.mixture.assign(n, 0.0f);
  const double w = 2.0 * std::numbers::pi / kRate;
  for (size_t i = 0; i < n; ++i) {
    if (i < a_end) out.a[i] = float(ga * std::sin(w * fa * double(i)) + 1e-3);
    if (i >= b_start) out.b[i] = float(gb * std::cos(w * fb * double(i)) + 1e-3);
    out.mixture[i] = out.a[i] + out.b[i];
  }
  return out;
}

// Wraps a separator and swaps the output streams of chunks selected by a
// seeded pattern.
class PermutingSeparator : public Separator {
 public:
  PermutingSeparator(const Separator& inner, uint64_t seed)
      : inner_(inner), seed_(seed) {}
  SeparatedChunk Separate(const Chunk& chunk,
                          std::span<const float> mixture) const override {
    SeparatedChunk out = inner_.Separate(chunk, mixture);
    if (CounterRng(seed_, chunk.index).Below(2) == 1)
      std::swap(out.streams[0], out.streams[1]);
    return out;
  }

 private:
  const Separator& inner_;
  uint64_t seed_;
};

// Largest per-sample error of the stream pair against (a, b), allowing one
// global swap.
inline double ReconstructionError(const StreamPair& streams, const Waveform& a,
                                  const Waveform& b) {
  auto err = [](const Waveform& x, const Waveform& y) {
    if (x.size() != y.size()) return double(INFINITY);
    double e = 0.0;
    for (size_t i = 0; i < x.size(); ++i)
      e = std::max(e, std::abs(double(x[i]) - double(y[i])));
    return e;
  };
  return std::min(std::max(err(streams[0], a), err(streams[1], b)),
                  std::max(err(streams[0], b), err(streams[1], a)));
}

}  // namespace sotkit::testing
