#pragma once

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sotkit/core.h"

namespace sotkit {

// Sliding analysis window of the separation front-end.
struct ChunkPlan {
  double window_s = 2.4;
  double hop_s = 0.8;

  size_t WindowSamples(int sample_rate) const;
  size_t HopSamples(int sample_rate) const;
};

// Throws ValidationError unless 0 < hop <= window.
void CheckPlan(const ChunkPlan& plan);

struct Chunk {
  size_t index = 0;
  size_t begin = 0;  // first sample
  size_t end = 0;    // one past the last sample

  size_t size() const { return end - begin; }
};

// Chunk i covers [i * hop, i * hop + window), clipped to the input. Chunks are
// emitted until one reaches the end of the input, so only the last chunk can
// be truncated. Empty input yields no chunks.
std::vector<Chunk> WindowChunks(size_t num_samples, const ChunkPlan& plan,
                                int sample_rate);

using StreamPair = std::array<Waveform, 2>;

struct SeparatedChunk {
  size_t chunk_index = 0;
  size_t begin = 0;
  StreamPair streams;        // both the chunk's length
  int dropped_speakers = 0;  // active speakers beyond the two kept
};

// Separators must be pure functions of the chunk so chunks can be processed
// in any order or concurrently.
class Separator {
 public:
  virtual ~Separator() = default;
  virtual SeparatedChunk Separate(const Chunk& chunk,
                                  std::span<const float> mixture) const = 0;
};

// stream 0 = mixture, stream 1 = zeros.
class IdentitySeparator : public Separator {
 public:
  SeparatedChunk Separate(const Chunk& chunk,
                          std::span<const float> mixture) const override;
};

// Emits the clean sources of the (at most) two most energetic speakers in the
// chunk, most energetic first. A speaker with no energy in the chunk is
// inactive; missing streams are zeros.
class OracleSeparator : public Separator {
 public:
  explicit OracleSeparator(std::map<std::string, Waveform> sources);
  // Throws ValidationError when the session carries no source audio.
  static OracleSeparator FromSession(const Session& session);

  SeparatedChunk Separate(const Chunk& chunk,
                          std::span<const float> mixture) const override;

 private:
  std::map<std::string, Waveform> sources_;
};

struct StitchResult {
  StreamPair streams;
  std::vector<bool> swapped;  // per chunk, relative to output channel order
  size_t swaps = 0;           // chunks whose raw order was swapped
};

// Left-to-right permutation alignment: the later chunk of each consecutive
// pair takes whichever channel order (identity or swap) has the lower mean
// squared difference against the already-aligned earlier chunk over their
// shared samples. Ties keep identity. Chunk i then contributes samples
// [begin_i, begin_{i+1}) and the last chunk contributes through its end.
StitchResult Stitch(std::span<const SeparatedChunk> chunks);

struct CssResult {
  StreamPair streams;
  size_t chunks = 0;
  size_t swaps = 0;
  int dropped_speakers = 0;
};

CssResult RunCss(std::span<const float> mixture, int sample_rate,
                 const ChunkPlan& plan, const Separator& separator);

struct PitResult {
  double loss = 0.0;
  bool swapped = false;  // true: estimate k matched reference 1 - k
};

// min over both assignments of the mean over outputs of per-pair MSE.
// Ties resolve to identity. Throws std::invalid_argument on length mismatch.
PitResult UpitLoss(std::array<std::span<const float>, 2> estimates,
                   std::array<std::span<const float>, 2> references);

// End-to-end latency of a front-end feeding an ASR model: the larger of the
// two. Throws std::invalid_argument on a negative input.
double PipelineLatency(double frontend_hop_s, double asr_latency_s);

// Oracle "recognizer" for separated streams: every reference token goes to
// the stream holding more energy over the token's span (stream 0 on ties).
// Returns a session whose tracks are the streams ("ch0", "ch1").
Session AttributeTokens(const Session& reference, const StreamPair& streams,
                        int sample_rate);

// Oracle SOT recognizer: the reference session restricted to tokens whose
// span carries energy in either stream, speaker labels kept.
Session AudibleTokens(const Session& reference, const StreamPair& streams,
                      int sample_rate);

}  // namespace sotkit
