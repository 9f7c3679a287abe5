#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sotkit {

// Declarative conformer encoder description.
//
// Layers 1..channel_dependent_layers run once per CSS channel and their
// outputs are summed; the remaining layers see the sum. Independently, layers
// 1..causal_layers use causal_chunk_s chunk masks and the rest use
// noncausal_chunk_s (<= 0 means full-utterance context).
struct ArchConfig {
  std::string name;
  int total_layers = 18;
  int channel_dependent_layers = 0;
  bool share_branch_weights = true;
  int attention_dim = 512;
  int heads = 8;
  int ffn_dim = 2048;
  int conv_kernel = 31;
  int ffn_modules_per_block = 1;  // 2 = macaron
  int causal_layers = 18;
  int noncausal_layers = 0;
  double causal_chunk_s = 0.16;
  double noncausal_chunk_s = 5.0;
  double frame_rate = 25.0;  // encoder frames per second after subsampling

  // Front-end: stride-2 3x3 Conv2d layers over input_dim features.
  int input_dim = 80;
  int subsampling_layers = 2;

  // Optional decoder terms; counted, never executed.
  enum class Decoder { kNone, kTransducer, kAttention };
  Decoder decoder = Decoder::kNone;
  int vocab_size = 0;
  int predictor_layers = 2;
  int predictor_dim = 1024;
  int joint_dim = 512;
  int decoder_layers = 6;
  int decoder_ffn_dim = 2048;

  bool two_channel() const { return channel_dependent_layers > 0; }
};

// Throws std::invalid_argument on a structurally invalid config.
void CheckConfig(const ArchConfig& config);

// "key = value" lines; '#' starts a comment. Unknown keys are errors.
ArchConfig ParseArchConfig(std::string_view text, std::string_view context);
ArchConfig LoadArchConfig(const std::filesystem::path& path);
std::string FormatArchConfig(const ArchConfig& config);

struct ParamBreakdown {
  std::vector<std::pair<std::string, int64_t>> terms;
  int64_t block = 0;     // one conformer block
  int64_t encoder = 0;   // conformer blocks, including unshared branches
  int64_t frontend = 0;  // subsampling
  int64_t decoder = 0;
  int64_t total = 0;
};

// Per conformer block:
//   MHSA            4 (d^2 + d)
//   FFN             m (2 d f + d + f)
//   conv in         2 d^2 + 2 d        (pointwise d -> 2d, GLU)
//   conv depthwise  k d + d
//   conv out        d^2 + d
//   norms           (m + 4) 2 d        (LN per FFN, MHSA, conv, final; BN)
// Two-channel encoders with shared branches count the dependent layers once;
// unshared branches add channel_dependent_layers extra blocks.
ParamBreakdown ParamCount(const ArchConfig& config);

struct ParityReport {
  bool equal = false;
  bool encoder_equal = false;
  ParamBreakdown a, b;
  int64_t difference = 0;  // a.total - b.total
};

ParityReport AssertParity(const ArchConfig& a, const ArchConfig& b);

enum class Tap { kFirstPass, kSecondPass };  // after causal / all layers

struct DependencyWindow {
  size_t earliest = 0;
  size_t latest = 0;
};

// Input frames that encoder output frame t at the tap can depend on, given
// chunk-wise masks (a frame sees every frame in its own and earlier chunks).
// Full-context layers extend to num_frames - 1. Throws std::invalid_argument
// for a first-pass tap on a config without causal layers.
DependencyWindow ComputeDependencyWindow(const ArchConfig& config, size_t t,
                                         Tap tap,
                                         size_t num_frames = SIZE_MAX / 2);

struct TapLatency {
  bool full_context = false;     // depends on the whole utterance
  size_t chunk_frames = 0;       // largest layer chunk in the stack
  // Composed lookahead of the stack. Exceeds chunk_frames - 1 when layer
  // chunk sizes are not multiples of each other.
  size_t max_lookahead_frames = 0;
  double mean_lookahead_frames = 0.0;
  double chunk_latency_s = 0.0;  // chunk_frames / frame_rate
  double max_lookahead_s = 0.0;
  double mean_lookahead_s = 0.0;
};

struct LatencyReport {
  std::optional<TapLatency> first_pass;
  TapLatency second_pass;
};

LatencyReport ComputeLatency(const ArchConfig& config);

// Small frames x dim grid carried through the toy forward pass.
struct ToyTensor {
  size_t frames = 0;
  size_t dim = 0;
  std::vector<double> data;

  ToyTensor() = default;
  ToyTensor(size_t frames, size_t dim)
      : frames(frames), dim(dim), data(frames * dim, 0.0) {}
  double& at(size_t t, size_t c) { return data[t * dim + c]; }
  double at(size_t t, size_t c) const { return data[t * dim + c]; }
  bool operator==(const ToyTensor&) const = default;
};

struct ToyOptions {
  bool nonlinear = true;  // tanh + bias; off makes every block linear
};

struct ToyOutput {
  ToyTensor first_pass;  // empty when the config has no causal layers
  ToyTensor second_pass;
};

// Deterministic pseudo-encoder. Each block averages its input over the
// frames its chunk mask allows, applies a seeded affine map and tanh, and
// adds a residual. Channel-dependent layers use identical weights on both
// inputs and their outputs are summed.
ToyOutput ToyForward(const ArchConfig& config,
                     const std::vector<ToyTensor>& inputs, uint64_t seed,
                     const ToyOptions& options = {});

inline constexpr size_t kToyMaxDim = 16;
inline constexpr size_t kToyMaxFrames = 64;

}  // namespace sotkit
