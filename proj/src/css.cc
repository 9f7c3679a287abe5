#include "sotkit/css.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sotkit {

size_t ChunkPlan::WindowSamples(int sample_rate) const {
  return static_cast<size_t>(std::llround(window_s * sample_rate));
}
size_t ChunkPlan::HopSamples(int sample_rate) const {
  return static_cast<size_t>(std::llround(hop_s * sample_rate));
}

void CheckPlan(const ChunkPlan& plan) {
  if (!(plan.hop_s > 0.0) || !(plan.hop_s <= plan.window_s))
    throw ValidationError(fmt::format(
        "chunk plan needs 0 < hop <= window (hop {}, window {})", plan.hop_s,
        plan.window_s));
}

std::vector<Chunk> WindowChunks(size_t num_samples, const ChunkPlan& plan,
                                int sample_rate) {
  CheckPlan(plan);
  const size_t window = plan.WindowSamples(sample_rate);
  const size_t hop = plan.HopSamples(sample_rate);
  if (hop == 0) throw ValidationError("hop is shorter than one sample");
  std::vector<Chunk> chunks;
  for (size_t begin = 0; begin < num_samples; begin += hop) {
    const size_t end = std::min(begin + window, num_samples);
    chunks.push_back({chunks.size(), begin, end});
    if (end == num_samples) break;
  }
  return chunks;
}

SeparatedChunk IdentitySeparator::Separate(
    const Chunk& chunk, std::span<const float> mixture) const {
  SeparatedChunk out{chunk.index, chunk.begin, {}, 0};
  const auto seg = mixture.subspan(chunk.begin, chunk.size());
  out.streams[0].assign(seg.begin(), seg.end());
  out.streams[1].assign(chunk.size(), 0.0f);
  return out;
}

OracleSeparator::OracleSeparator(std::map<std::string, Waveform> sources)
    : sources_(std::move(sources)) {}

OracleSeparator OracleSeparator::FromSession(const Session& session) {
  if (session.sources.empty())
    throw ValidationError(fmt::format(
        "session '{}' has no source audio for oracle separation",
        session.session_id));
  return OracleSeparator(session.sources);
}

SeparatedChunk OracleSeparator::Separate(
    const Chunk& chunk, std::span<const float> /*mixture*/) const {
  struct Active {
    double energy;
    const Waveform* wave;
  };
  std::vector<Active> active;
  for (const auto& [speaker, wave] : sources_) {
    if (wave.size() < chunk.end)
      throw ValidationError(
          fmt::format("source '{}' is shorter than the mixture", speaker));
    double energy = 0.0;
    for (size_t i = chunk.begin; i < chunk.end; ++i)
      energy += double(wave[i]) * wave[i];
    if (energy > 0.0) active.push_back({energy, &wave});
  }
  // Map order breaks energy ties by speaker id.
  std::stable_sort(active.begin(), active.end(),
                   [](const Active& a, const Active& b) {
                     return a.energy > b.energy;
                   });

  SeparatedChunk out{chunk.index, chunk.begin, {}, 0};
  for (size_t k = 0; k < 2; ++k) {
    if (k < active.size()) {
      const Waveform& w = *active[k].wave;
      out.streams[k].assign(w.begin() + chunk.begin, w.begin() + chunk.end);
    } else {
      out.streams[k].assign(chunk.size(), 0.0f);
    }
  }
  out.dropped_speakers = std::max(0, static_cast<int>(active.size()) - 2);
  return out;
}

StitchResult Stitch(std::span<const SeparatedChunk> chunks) {
  StitchResult result;
  if (chunks.empty()) return result;
  for (size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    if (c.streams[0].size() != c.streams[1].size())
      throw std::invalid_argument(
          fmt::format("chunk {} has streams of unequal length", c.chunk_index));
    if (i > 0 && c.begin < chunks[i - 1].begin)
      throw std::invalid_argument("chunks are not in order");
  }

  const size_t total = chunks.back().begin + chunks.back().streams[0].size();
  result.streams[0].assign(total, 0.0f);
  result.streams[1].assign(total, 0.0f);
  result.swapped.assign(chunks.size(), false);

  for (size_t i = 1; i < chunks.size(); ++i) {
    const SeparatedChunk& prev = chunks[i - 1];
    const SeparatedChunk& cur = chunks[i];
    const size_t prev_end = prev.begin + prev.streams[0].size();
    const size_t cur_end = cur.begin + cur.streams[0].size();
    const size_t lo = cur.begin, hi = std::min(prev_end, cur_end);
    // Prev streams as seen on output channels.
    const bool prev_swap = result.swapped[i - 1];
    const Waveform& p0 = prev.streams[prev_swap ? 1 : 0];
    const Waveform& p1 = prev.streams[prev_swap ? 0 : 1];
    double keep = 0.0, swap = 0.0;
    for (size_t t = lo; t < hi; ++t) {
      const double a0 = p0[t - prev.begin], a1 = p1[t - prev.begin];
      const double b0 = cur.streams[0][t - cur.begin];
      const double b1 = cur.streams[1][t - cur.begin];
      keep += (a0 - b0) * (a0 - b0) + (a1 - b1) * (a1 - b1);
      swap += (a0 - b1) * (a0 - b1) + (a1 - b0) * (a1 - b0);
    }
    // Both sums share the same normalizer, so comparing sums compares MSEs.
    result.swapped[i] = swap < keep;
  }

  for (size_t i = 0; i < chunks.size(); ++i) {
    const SeparatedChunk& c = chunks[i];
    const size_t from = c.begin;
    const size_t to = i + 1 < chunks.size()
                          ? chunks[i + 1].begin
                          : c.begin + c.streams[0].size();
    const bool sw = result.swapped[i];
    if (sw) ++result.swaps;
    for (size_t k = 0; k < 2; ++k) {
      const Waveform& src = c.streams[sw ? 1 - k : k];
      for (size_t t = from; t < to && t - c.begin < src.size(); ++t)
        result.streams[k][t] = src[t - c.begin];
    }
  }
  return result;
}

CssResult RunCss(std::span<const float> mixture, int sample_rate,
                 const ChunkPlan& plan, const Separator& separator) {
  CssResult out;
  std::vector<SeparatedChunk> separated;
  for (const Chunk& chunk : WindowChunks(mixture.size(), plan, sample_rate)) {
    separated.push_back(separator.Separate(chunk, mixture));
    out.dropped_speakers += separated.back().dropped_speakers;
  }
  StitchResult stitched = Stitch(separated);
  out.streams = std::move(stitched.streams);
  out.chunks = separated.size();
  out.swaps = stitched.swaps;
  return out;
}

namespace {

double Mse(std::span<const float> a, std::span<const float> b) {
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sum += d * d;
  }
  return sum / double(a.size());
}

}  // namespace

PitResult UpitLoss(std::array<std::span<const float>, 2> estimates,
                   std::array<std::span<const float>, 2> references) {
  const size_t n = estimates[0].size();
  if (estimates[1].size() != n || references[0].size() != n ||
      references[1].size() != n) {
    throw std::invalid_argument(fmt::format(
        "uPIT needs equal lengths, got {}/{} vs {}/{}", estimates[0].size(),
        estimates[1].size(), references[0].size(), references[1].size()));
  }
  const double keep =
      (Mse(estimates[0], references[0]) + Mse(estimates[1], references[1])) /
      2.0;
  const double swap =
      (Mse(estimates[0], references[1]) + Mse(estimates[1], references[0])) /
      2.0;
  if (swap < keep) return {swap, true};
  return {keep, false};
}

double PipelineLatency(double frontend_hop_s, double asr_latency_s) {
  if (frontend_hop_s < 0.0 || asr_latency_s < 0.0)
    throw std::invalid_argument("latencies must be non-negative");
  return std::max(frontend_hop_s, asr_latency_s);
}

namespace {

std::array<double, 2> TokenEnergy(const TimedToken& tok,
                                  const StreamPair& streams, int sample_rate) {
  auto to_sample = [&](Time t) {
    return static_cast<size_t>((t.micros() * int64_t(sample_rate) + 500'000) /
                               1'000'000);
  };
  std::array<double, 2> energy{0.0, 0.0};
  for (size_t k = 0; k < 2; ++k) {
    const size_t b = std::min(to_sample(tok.start), streams[k].size());
    const size_t e = std::min(to_sample(tok.end), streams[k].size());
    for (size_t i = b; i < e; ++i)
      energy[k] += double(streams[k][i]) * streams[k][i];
  }
  return energy;
}

}  // namespace

Session AttributeTokens(const Session& reference, const StreamPair& streams,
                        int sample_rate) {
  Session out;
  out.session_id = reference.session_id;
  out.metadata = reference.metadata;
  out.tracks = {{"ch0", {}}, {"ch1", {}}};
  for (const auto& track : reference.tracks) {
    for (const auto& tok : track.tokens) {
      const auto energy = TokenEnergy(tok, streams, sample_rate);
      out.tracks[energy[1] > energy[0] ? 1 : 0].tokens.push_back(tok);
    }
  }
  for (auto& track : out.tracks)
    std::stable_sort(track.tokens.begin(), track.tokens.end(),
                     [](const TimedToken& a, const TimedToken& b) {
                       return a.start < b.start;
                     });
  return out;
}

Session AudibleTokens(const Session& reference, const StreamPair& streams,
                      int sample_rate) {
  Session out;
  out.session_id = reference.session_id;
  out.metadata = reference.metadata;
  for (const auto& track : reference.tracks) {
    SpeakerTrack kept{track.speaker_id, {}};
    for (const auto& tok : track.tokens) {
      const auto energy = TokenEnergy(tok, streams, sample_rate);
      if (energy[0] + energy[1] > 0.0) kept.tokens.push_back(tok);
    }
    out.tracks.push_back(std::move(kept));
  }
  return out;
}

}  // namespace sotkit
