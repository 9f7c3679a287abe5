#include "sotkit/simulate.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sotkit/rng.h"

namespace sotkit {

std::string_view ConditionName(Condition c) {
  switch (c) {
    case Condition::k0L: return "0L";
    case Condition::k0S: return "0S";
    case Condition::kOV10: return "OV10";
    case Condition::kOV20: return "OV20";
    case Condition::kOV30: return "OV30";
    case Condition::kOV40: return "OV40";
    case Condition::kCustom: return "custom";
  }
  return "?";
}

Condition ParseCondition(std::string_view name) {
  for (Condition c : {Condition::k0L, Condition::k0S, Condition::kOV10,
                      Condition::kOV20, Condition::kOV30, Condition::kOV40,
                      Condition::kCustom}) {
    if (ConditionName(c) == name) return c;
  }
  throw ParseError(fmt::format("unknown condition '{}'", name));
}

namespace {

double ConditionTarget(Condition c) {
  switch (c) {
    case Condition::kOV10: return 0.10;
    case Condition::kOV20: return 0.20;
    case Condition::kOV30: return 0.30;
    case Condition::kOV40: return 0.40;
    default: return 0.0;
  }
}

}  // namespace

MixtureSpec MixtureSpec::ForCondition(Condition condition, uint64_t seed) {
  MixtureSpec spec;
  spec.condition = condition;
  spec.seed = seed;
  spec.target_overlap_ratio = ConditionTarget(condition);
  if (condition == Condition::k0L) spec.silence_range = {2.9, 3.0};
  return spec;
}

void CheckSpec(const MixtureSpec& spec) {
  auto fail = [](std::string msg) { throw ValidationError(std::move(msg)); };
  if (spec.num_speakers < 1) fail("num_speakers must be >= 1");
  if (!(spec.target_overlap_ratio >= 0.0 && spec.target_overlap_ratio < 1.0))
    fail("target_overlap_ratio must be in [0, 1)");
  if (spec.silence_range.first < 0.0 ||
      spec.silence_range.first > spec.silence_range.second)
    fail("silence_range must satisfy 0 <= min <= max");
  if (spec.gain_range_db.first > spec.gain_range_db.second)
    fail("gain_range_db must satisfy min <= max");
  if (!(spec.mix_probability >= 0.0 && spec.mix_probability <= 1.0))
    fail("mix_probability must be in [0, 1]");
  if (spec.tolerance < 0.0) fail("tolerance must be >= 0");
  if (spec.condition != Condition::kCustom &&
      std::abs(spec.target_overlap_ratio - ConditionTarget(spec.condition)) >
          1e-12) {
    fail(fmt::format("target_overlap_ratio {} is inconsistent with condition {}",
                     spec.target_overlap_ratio, ConditionName(spec.condition)));
  }
}

double OverlapRatio(const Session& session) {
  std::vector<std::pair<int64_t, int>> edges;
  for (const auto& track : session.tracks) {
    for (const auto& tok : track.tokens) {
      edges.emplace_back(tok.start.micros(), +1);
      edges.emplace_back(tok.end.micros(), -1);
    }
  }
  if (edges.empty()) return 0.0;
  std::sort(edges.begin(), edges.end());
  int64_t any = 0, multi = 0;
  int active = 0;
  int64_t prev = edges.front().first;
  for (const auto& [t, delta] : edges) {
    const int64_t dt = t - prev;
    if (active >= 1) any += dt;
    if (active >= 2) multi += dt;
    active += delta;
    prev = t;
  }
  return any == 0 ? 0.0 : double(multi) / double(any);
}

namespace {

int64_t SpeechMicros(const SpeakerTrack& t) {
  int64_t total = 0;
  for (const auto& tok : t.tokens) total += (tok.end - tok.start).micros();
  return total;
}

int64_t ExtentMicros(const SpeakerTrack& t) {
  return t.tokens.empty() ? 0 : t.tokens.back().end.micros();
}

// Total intersection of a's tokens with b's tokens shifted by offset.
int64_t PairOverlap(const SpeakerTrack& a, const SpeakerTrack& b,
                    int64_t offset) {
  int64_t total = 0;
  size_t i = 0, j = 0;
  while (i < a.tokens.size() && j < b.tokens.size()) {
    const int64_t a0 = a.tokens[i].start.micros(), a1 = a.tokens[i].end.micros();
    const int64_t b0 = b.tokens[j].start.micros() + offset;
    const int64_t b1 = b.tokens[j].end.micros() + offset;
    total += std::max<int64_t>(0, std::min(a1, b1) - std::max(a0, b0));
    if (a1 < b1)
      ++i;
    else
      ++j;
  }
  return total;
}

Time DrawSeconds(CounterRng& rng, std::pair<double, double> range) {
  return Time::FromSeconds(rng.Uniform(range.first, range.second));
}

struct Event {
  size_t first = 0;
  std::optional<size_t> second;
  int speaker_first = 0;
  int speaker_second = 0;
  Time gap;          // silence before the event
  Time inner_gap;    // silence between the two utterances at zero overlap
  double gain_first = 0, gain_second = 0;
  int64_t offset = 0;  // start of second relative to first, microseconds
};

constexpr int64_t kOffsetStepMicros = 10'000;

}  // namespace

Simulation PlaceUtterances(std::span<const SpeakerTrack> pool,
                           const MixtureSpec& spec, std::string session_id) {
  CheckSpec(spec);
  if (pool.empty()) throw ValidationError("utterance pool is empty");
  for (size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].tokens.empty())
      throw ValidationError(fmt::format("pool template {} has no tokens", i));
    Session probe;
    probe.tracks = {pool[i]};
    CheckSession(probe);
  }
  const double target = spec.target_overlap_ratio;
  if (target > 0.0) {
    if (spec.num_speakers < 2)
      throw ValidationError(fmt::format(
          "{} needs overlap but num_speakers = {}",
          ConditionName(spec.condition), spec.num_speakers));
    if (pool.size() < 2)
      throw ValidationError("overlap target needs at least 2 pool templates");
    if (spec.mix_probability <= 0.0)
      throw ValidationError("overlap target needs mix_probability > 0");
  }
  const bool can_pair = spec.num_speakers >= 2;

  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    CounterRng rng(spec.seed, static_cast<uint64_t>(attempt));

    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.Below(i)]);

    std::vector<Event> events;
    size_t mixed = 0;
    for (size_t i = 0; i < order.size();) {
      Event ev;
      ev.first = order[i];
      const bool pair = can_pair && i + 1 < order.size() &&
                        rng.Uniform() < spec.mix_probability;
      ev.speaker_first = static_cast<int>(rng.Below(spec.num_speakers));
      ev.gap = DrawSeconds(rng, spec.silence_range);
      ev.gain_first = rng.Uniform(spec.gain_range_db.first,
                                  spec.gain_range_db.second);
      if (pair) {
        ev.second = order[i + 1];
        int other = static_cast<int>(rng.Below(spec.num_speakers - 1));
        ev.speaker_second = other >= ev.speaker_first ? other + 1 : other;
        ev.inner_gap = DrawSeconds(rng, spec.silence_range);
        ev.gain_second = rng.Uniform(spec.gain_range_db.first,
                                     spec.gain_range_db.second);
        ++mixed;
        i += 2;
      } else {
        i += 1;
      }
      events.push_back(ev);
    }

    // Overlap accounting is additive over events because events never
    // overlap each other. Balance sum(overlap - target * speech) to zero.
    double balance = 0.0;
    size_t pairs = 0;
    for (const auto& ev : events) {
      if (ev.second)
        ++pairs;
      else
        balance -= target * double(SpeechMicros(pool[ev.first]));
    }
    size_t pairs_left = pairs;
    for (auto& ev : events) {
      if (!ev.second) continue;
      const SpeakerTrack& a = pool[ev.first];
      const SpeakerTrack& b = pool[*ev.second];
      const int64_t extent_a = ExtentMicros(a);
      if (target == 0.0) {
        ev.offset = extent_a + ev.inner_gap.micros();
        continue;
      }
      const double speech = double(SpeechMicros(a) + SpeechMicros(b));
      const double desired = -balance / double(pairs_left);
      double best_err = INFINITY, best_value = 0.0;
      for (int64_t o = 0; o <= extent_a + kOffsetStepMicros;
           o += kOffsetStepMicros) {
        const double ov = double(PairOverlap(a, b, o));
        const double value = ov - target * (speech - ov);
        const double err = std::abs(value - desired);
        if (err < best_err) {
          best_err = err;
          best_value = value;
          ev.offset = o;
        }
      }
      balance += best_value;
      --pairs_left;
    }

    Simulation sim;
    sim.session.session_id = session_id;
    std::vector<SpeakerTrack> tracks(spec.num_speakers);
    for (int s = 0; s < spec.num_speakers; ++s)
      tracks[s].speaker_id = fmt::format("spk{}", s + 1);
    auto place = [&](size_t tmpl, int speaker, Time offset, double gain,
                     size_t event_index) {
      for (const auto& tok : pool[tmpl].tokens)
        tracks[speaker].tokens.push_back(
            {tok.text, tok.start + offset, tok.end + offset});
      sim.placements.push_back(
          {tmpl, tracks[speaker].speaker_id, offset,
           Time::FromMicros(ExtentMicros(pool[tmpl])), gain, event_index});
    };
    Time cursor;
    for (size_t e = 0; e < events.size(); ++e) {
      const Event& ev = events[e];
      const Time start = cursor + ev.gap;
      place(ev.first, ev.speaker_first, start, ev.gain_first, e);
      Time end = start + Time::FromMicros(ExtentMicros(pool[ev.first]));
      if (ev.second) {
        const Time second_start = start + Time::FromMicros(ev.offset);
        place(*ev.second, ev.speaker_second, second_start, ev.gain_second, e);
        end = std::max(end, second_start +
                                Time::FromMicros(ExtentMicros(pool[*ev.second])));
      }
      cursor = end;
    }
    for (auto& t : tracks)
      if (!t.tokens.empty()) sim.session.tracks.push_back(std::move(t));

    const double realized = OverlapRatio(sim.session);
    if (std::abs(realized - target) > spec.tolerance) continue;

    sim.events = events.size();
    sim.mixed_events = mixed;
    sim.attempts = attempt + 1;
    auto& meta = sim.session.metadata;
    meta["condition"] = std::string(ConditionName(spec.condition));
    meta["rng"] = std::string(CounterRng::kName);
    meta["seed"] = std::to_string(spec.seed);
    meta["attempt"] = std::to_string(attempt);
    meta["target_overlap_ratio"] = fmt::format("{:.6f}", target);
    meta["overlap_ratio"] = fmt::format("{:.6f}", realized);
    meta["events"] = std::to_string(sim.events);
    meta["mixed_events"] = std::to_string(sim.mixed_events);
    CheckSession(sim.session);
    return sim;
  }
  throw ValidationError(fmt::format(
      "could not reach overlap ratio {:.3f} +/- {:.3f} within {} attempts",
      target, spec.tolerance, spec.max_attempts));
}

Session SynthesizeMixtureAudio(const Simulation& sim,
                               std::span<const WavData> utterance_audio) {
  if (utterance_audio.empty()) throw ValidationError("no utterance audio");
  const int rate = utterance_audio.front().sample_rate;
  auto to_samples = [rate](Time t) {
    return static_cast<size_t>((t.micros() * int64_t(rate) + 500'000) /
                               1'000'000);
  };

  Session out = sim.session;
  size_t length = 0;
  for (const auto& track : out.tracks)
    if (!track.tokens.empty())
      length = std::max(length, to_samples(track.tokens.back().end));
  for (const auto& p : sim.placements) {
    if (p.template_index >= utterance_audio.size())
      throw ValidationError(
          fmt::format("missing audio for template {}", p.template_index));
    const WavData& wav = utterance_audio[p.template_index];
    if (wav.sample_rate != rate)
      throw ValidationError(fmt::format(
          "template {} has sample rate {}, expected {}", p.template_index,
          wav.sample_rate, rate));
    length = std::max(length, to_samples(p.offset) + wav.samples.size());
  }

  std::map<std::string, Waveform> sources;
  for (const auto& track : out.tracks)
    sources[track.speaker_id] = Waveform(length, 0.0f);
  for (const auto& p : sim.placements) {
    const WavData& wav = utterance_audio[p.template_index];
    if (wav.samples.size() < to_samples(p.extent))
      throw ValidationError(fmt::format(
          "audio for template {} is shorter than its tokens", p.template_index));
    const float gain = static_cast<float>(std::pow(10.0, p.gain_db / 20.0));
    Waveform& dst = sources[p.speaker_id];
    const size_t at = to_samples(p.offset);
    for (size_t i = 0; i < wav.samples.size(); ++i)
      dst[at + i] += gain * wav.samples[i];
  }

  Waveform mixture(length, 0.0f);
  for (const auto& [_, wave] : sources)
    for (size_t i = 0; i < length; ++i) mixture[i] += wave[i];
  float peak = 0.0f;
  for (float x : mixture) peak = std::max(peak, std::abs(x));
  if (peak > 1.0f) {
    const float scale = 1.0f / peak;
    for (auto& [_, wave] : sources)
      for (float& x : wave) x *= scale;
    std::fill(mixture.begin(), mixture.end(), 0.0f);
    for (const auto& [_, wave] : sources)
      for (size_t i = 0; i < length; ++i) mixture[i] += wave[i];
  }
  out.sample_rate = rate;
  out.mixture = std::move(mixture);
  out.sources = std::move(sources);
  CheckSession(out);
  return out;
}

WavData RenderTokenTones(const SpeakerTrack& utterance, double frequency_hz,
                         int sample_rate, float amplitude) {
  WavData out;
  out.sample_rate = sample_rate;
  if (utterance.tokens.empty()) return out;
  auto to_samples = [&](Time t) {
    return static_cast<size_t>((t.micros() * int64_t(sample_rate) + 500'000) /
                               1'000'000);
  };
  out.samples.assign(to_samples(utterance.tokens.back().end), 0.0f);
  const double w = 2.0 * std::numbers::pi * frequency_hz / sample_rate;
  for (const auto& tok : utterance.tokens) {
    const size_t b = to_samples(tok.start), e = to_samples(tok.end);
    for (size_t i = b; i < e; ++i)
      out.samples[i] = amplitude * static_cast<float>(std::sin(w * double(i)));
  }
  return out;
}

}  // namespace sotkit
