#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sotkit/core.h"
#include "sotkit/wav.h"

namespace sotkit {

// Evaluation conditions: 0L / 0S have no overlap with
// long / short inter-utterance silences, OVxx targets xx% overlap.
enum class Condition { k0L, k0S, kOV10, kOV20, kOV30, kOV40, kCustom };

std::string_view ConditionName(Condition c);
Condition ParseCondition(std::string_view name);

struct MixtureSpec {
  int num_speakers = 2;
  double target_overlap_ratio = 0.0;
  Condition condition = Condition::kCustom;
  std::pair<double, double> silence_range{0.1, 0.5};  // seconds
  double mix_probability = 2.0 / 3.0;
  uint64_t seed = 0;
  std::pair<double, double> gain_range_db{0.0, 0.0};
  double tolerance = 0.02;  // accepted |realized - target| overlap ratio
  int max_attempts = 1000;

  // Condition defaults: 0L silences in [2.9, 3.0]s, 0S in [0.1, 0.5]s,
  // OVxx target xx/100 with [0.1, 0.5]s silences.
  static MixtureSpec ForCondition(Condition condition, uint64_t seed);
};

// Throws ValidationError on inconsistent ranges or condition/target mismatch.
void CheckSpec(const MixtureSpec& spec);

// Where one pool template landed on the session timeline.
struct Placement {
  size_t template_index = 0;
  std::string speaker_id;
  Time offset;
  Time extent;  // last token end, relative to the utterance start
  double gain_db = 0.0;
  size_t event_index = 0;
};

struct Simulation {
  Session session;
  std::vector<Placement> placements;
  size_t events = 0;
  size_t mixed_events = 0;
  int attempts = 0;

  double MixedFraction() const {
    return events == 0 ? 0.0 : double(mixed_events) / double(events);
  }
};

// Lays every pool template (a single-utterance track with times starting at
// 0) exactly once on a shared timeline. Each event is either a solo
// utterance or, with probability mix_probability, an overlapped pair of
// different speakers. Pair offsets are chosen so the session's overlap ratio
// lands on target; whole layouts are redrawn until it is within tolerance.
// Deterministic in (pool, spec).
Simulation PlaceUtterances(std::span<const SpeakerTrack> pool,
                           const MixtureSpec& spec,
                           std::string session_id = "sim");

// Speech time where >= 2 speakers are active over speech time where >= 1
// speaker is active. 0 for a session without tokens.
double OverlapRatio(const Session& session);

// Builds per-speaker timeline waveforms from per-template audio (indexed like
// the pool) and mixes them. When the mixture peak exceeds 1 the mixture and
// all sources are scaled down together.
Session SynthesizeMixtureAudio(const Simulation& sim,
                               std::span<const WavData> utterance_audio);

// Deterministic stand-in audio for a template: a sine burst of the given
// frequency under each token, exact zeros elsewhere.
WavData RenderTokenTones(const SpeakerTrack& utterance, double frequency_hz,
                         int sample_rate, float amplitude = 0.3f);

}  // namespace sotkit
