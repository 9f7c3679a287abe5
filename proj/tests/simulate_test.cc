#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "sotkit/simulate.h"
#include "test_util.h"

namespace sotkit {
namespace {

using testing::FixturePath;
using testing::TokenMs;

// Independent oracle: count active speakers on every millisecond.
double OverlapRatioMs(const Session& s) {
  int64_t horizon = 0;
  for (const auto& t : s.tracks)
    for (const auto& tok : t.tokens)
      horizon = std::max(horizon, tok.end.micros() / 1000);
  std::vector<int> active(horizon, 0);
  for (const auto& t : s.tracks)
    for (const auto& tok : t.tokens)
      for (int64_t ms = tok.start.micros() / 1000; ms < tok.end.micros() / 1000;
           ++ms)
        ++active[ms];
  int64_t speech = 0, overlap = 0;
  for (int c : active) {
    speech += c >= 1;
    overlap += c >= 2;
  }
  return speech == 0 ? 0.0 : double(overlap) / double(speech);
}

std::vector<SpeakerTrack> MakePool(uint64_t seed, size_t n) {
  CounterRng rng(seed, 99);
  std::vector<SpeakerTrack> pool;
  for (size_t i = 0; i < n; ++i)
    pool.push_back(testing::RandomTrack(rng, "u" + std::to_string(i),
                                        3 + rng.Below(8), 0, 0, 300));
  return pool;
}

TEST(OverlapRatio, TrivialCases) {
  Session s;
  EXPECT_EQ(OverlapRatio(s), 0.0);
  s.tracks = {{"a", {TokenMs("x", 0, 1000), TokenMs("y", 1500, 2000)}}};
  EXPECT_EQ(OverlapRatio(s), 0.0);
  s.tracks = {{"a", {TokenMs("x", 0, 1000)}}, {"b", {TokenMs("y", 0, 1000)}}};
  EXPECT_EQ(OverlapRatio(s), 1.0);
}

TEST(OverlapRatio, FixtureMatchesMillisecondSweep) {
  Session s = LoadSession(FixturePath("three_speakers.json"));
  // 850 ms with two or more speakers out of 4580 ms of speech.
  EXPECT_DOUBLE_EQ(OverlapRatioMs(s), 850.0 / 4580.0);
  EXPECT_DOUBLE_EQ(OverlapRatio(s), 850.0 / 4580.0);
}

TEST(OverlapRatio, RandomSessionsMatchSweep) {
  CounterRng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    Session s = testing::RandomSession(rng);
    ASSERT_DOUBLE_EQ(OverlapRatio(s), OverlapRatioMs(s)) << trial;
  }
}

TEST(Spec, InfeasibleRejectedUpFront) {
  auto pool = MakePool(1, 10);
  MixtureSpec spec = MixtureSpec::ForCondition(Condition::kOV40, 1);
  spec.num_speakers = 1;
  EXPECT_THROW(PlaceUtterances(pool, spec), ValidationError);
  spec = MixtureSpec::ForCondition(Condition::kOV40, 1);
  EXPECT_THROW(PlaceUtterances(std::span(pool).first(1), spec),
               ValidationError);
  spec.target_overlap_ratio = 0.2;
  EXPECT_THROW(CheckSpec(spec), ValidationError);
  spec = {};
  spec.silence_range = {0.5, 0.1};
  EXPECT_THROW(CheckSpec(spec), ValidationError);
  EXPECT_THROW(PlaceUtterances({}, MixtureSpec{}), ValidationError);
}

TEST(Spec, ConditionNames) {
  for (auto c : {Condition::k0L, Condition::k0S, Condition::kOV10,
                 Condition::kOV20, Condition::kOV30, Condition::kOV40,
                 Condition::kCustom})
    EXPECT_EQ(ParseCondition(ConditionName(c)), c);
  EXPECT_THROW(ParseCondition("OV50"), ParseError);
  EXPECT_EQ(MixtureSpec::ForCondition(Condition::k0L, 0).silence_range,
            (std::pair<double, double>{2.9, 3.0}));
}

TEST(Place, LongSilenceConditionHasNoOverlapAndBoundedGaps) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto pool = MakePool(seed, 2 + seed % 5);
    auto sim = PlaceUtterances(
        pool, MixtureSpec::ForCondition(Condition::k0L, seed));
    EXPECT_EQ(OverlapRatio(sim.session), 0.0);
    auto placements = sim.placements;
    std::sort(placements.begin(), placements.end(),
              [](const Placement& a, const Placement& b) {
                return a.offset < b.offset;
              });
    Time prev_end;
    for (const auto& p : placements) {
      const Time gap = p.offset - prev_end;
      EXPECT_GE(gap, Time::FromSeconds(2.9));
      EXPECT_LE(gap, Time::FromSeconds(3.0));
      prev_end = p.offset + p.extent;
    }
  }
}

TEST(Place, MixingFractionNearTwoThirds) {
  auto pool = MakePool(5, 300);
  MixtureSpec spec = MixtureSpec::ForCondition(Condition::k0S, 5);
  auto sim = PlaceUtterances(pool, spec);
  EXPECT_GE(sim.MixedFraction(), 0.60);
  EXPECT_LE(sim.MixedFraction(), 0.73);
}

TEST(Place, OverlapTargetsWithinTolerance) {
  for (auto c : {Condition::kOV10, Condition::kOV20, Condition::kOV30,
                 Condition::kOV40}) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      auto pool = MakePool(seed + 100, 20);
      auto spec = MixtureSpec::ForCondition(c, seed);
      auto sim = PlaceUtterances(pool, spec);
      EXPECT_NEAR(OverlapRatio(sim.session), spec.target_overlap_ratio, 0.02)
          << ConditionName(c) << " seed " << seed;
      EXPECT_EQ(sim.session.metadata.at("condition"), ConditionName(c));
      EXPECT_EQ(sim.session.metadata.at("seed"), std::to_string(seed));
    }
  }
}

TEST(Place, ConservesTemplatesAndDurations) {
  auto pool = MakePool(7, 15);
  auto sim = PlaceUtterances(pool, MixtureSpec::ForCondition(Condition::kOV20, 7));
  ASSERT_EQ(sim.placements.size(), pool.size());
  std::vector<size_t> seen;
  for (const auto& p : sim.placements) {
    seen.push_back(p.template_index);
    const auto* track = sim.session.FindTrack(p.speaker_id);
    ASSERT_NE(track, nullptr);
    // Every template token shows up shifted by the placement offset.
    for (const auto& tok : pool[p.template_index].tokens) {
      TimedToken shifted{tok.text, tok.start + p.offset, tok.end + p.offset};
      EXPECT_NE(std::find(track->tokens.begin(), track->tokens.end(), shifted),
                track->tokens.end());
    }
  }
  std::sort(seen.begin(), seen.end());
  for (size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);
  size_t total = 0;
  for (const auto& t : pool) total += t.tokens.size();
  EXPECT_EQ(sim.session.NumTokens(), total);
}

TEST(Place, ThreeSpeakersSupported) {
  auto pool = MakePool(8, 30);
  auto spec = MixtureSpec::ForCondition(Condition::kOV30, 8);
  spec.num_speakers = 3;
  auto sim = PlaceUtterances(pool, spec);
  EXPECT_EQ(sim.session.tracks.size(), 3u);
  EXPECT_NEAR(OverlapRatio(sim.session), 0.3, 0.02);
}

TEST(Place, Deterministic) {
  auto pool = MakePool(9, 25);
  auto spec = MixtureSpec::ForCondition(Condition::kOV30, 9);
  auto a = PlaceUtterances(pool, spec);
  auto b = PlaceUtterances(pool, spec);
  EXPECT_EQ(a.session, b.session);
  spec.seed = 10;
  EXPECT_NE(PlaceUtterances(pool, spec).session, a.session);
}

std::vector<WavData> ToneAudio(const std::vector<SpeakerTrack>& pool) {
  std::vector<WavData> audio;
  for (size_t i = 0; i < pool.size(); ++i)
    audio.push_back(RenderTokenTones(pool[i], 220.0 + 110.0 * double(i % 7),
                                     16000));
  return audio;
}

TEST(Audio, SingleSpeakerUnitGainMixtureIsSource) {
  auto pool = MakePool(30, 4);
  auto spec = MixtureSpec::ForCondition(Condition::k0S, 30);
  spec.num_speakers = 1;
  auto sim = PlaceUtterances(pool, spec);
  Session s = SynthesizeMixtureAudio(sim, ToneAudio(pool));
  ASSERT_EQ(s.sources.size(), 1u);
  EXPECT_EQ(*s.mixture, s.sources.begin()->second);
}

TEST(Audio, DisjointSourcesEqualMixtureOnSupport) {
  auto pool = MakePool(31, 6);
  auto sim = PlaceUtterances(pool, MixtureSpec::ForCondition(Condition::k0L, 31));
  Session s = SynthesizeMixtureAudio(sim, ToneAudio(pool));
  ASSERT_EQ(s.sources.size(), 2u);
  const auto& a = s.sources.begin()->second;
  const auto& b = std::next(s.sources.begin())->second;
  for (size_t i = 0; i < a.size(); ++i) {
    ASSERT_FALSE(a[i] != 0.0f && b[i] != 0.0f) << i;
    if (a[i] != 0.0f) {
      ASSERT_EQ((*s.mixture)[i], a[i]);
    }
    if (b[i] != 0.0f) {
      ASSERT_EQ((*s.mixture)[i], b[i]);
    }
  }
}

TEST(Audio, OverlappedTonesSumWithinOneLsb) {
  auto pool = MakePool(32, 8);
  auto sim = PlaceUtterances(pool, MixtureSpec::ForCondition(Condition::kOV40, 32));
  Session s = SynthesizeMixtureAudio(sim, ToneAudio(pool));
  ASSERT_EQ(s.sources.size(), 2u);
  const auto& a = s.sources.begin()->second;
  const auto& b = std::next(s.sources.begin())->second;
  const Waveform stored = Quantize16(*s.mixture);
  size_t overlapped = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    overlapped += a[i] != 0.0f && b[i] != 0.0f;
    ASSERT_LE(std::abs(double(stored[i]) - (double(a[i]) + double(b[i]))),
              1.0 / 32768.0);
  }
  EXPECT_GT(overlapped, 0u);
}

TEST(Audio, GainsAndRenormalization) {
  auto pool = MakePool(33, 8);
  auto spec = MixtureSpec::ForCondition(Condition::kOV40, 33);
  spec.gain_range_db = {6.0, 12.0};
  auto sim = PlaceUtterances(pool, spec);
  Session s = SynthesizeMixtureAudio(sim, ToneAudio(pool));
  float peak = 0.0f;
  for (float x : *s.mixture) peak = std::max(peak, std::abs(x));
  EXPECT_LE(peak, 1.0f + 1e-6f);
  for (size_t i = 0; i < s.mixture->size(); ++i) {
    float sum = 0.0f;
    for (const auto& [_, w] : s.sources) sum += w[i];
    ASSERT_FLOAT_EQ((*s.mixture)[i], sum);
  }
}

TEST(Audio, RejectsMismatchedRates) {
  auto pool = MakePool(34, 4);
  auto sim = PlaceUtterances(pool, MixtureSpec::ForCondition(Condition::k0S, 34));
  auto audio = ToneAudio(pool);
  audio[1].sample_rate = 8000;
  EXPECT_THROW(SynthesizeMixtureAudio(sim, audio), ValidationError);
  audio = ToneAudio(pool);
  audio.pop_back();
  EXPECT_THROW(SynthesizeMixtureAudio(sim, audio), ValidationError);
}

std::string ReadBytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Audio, DeterministicBytes) {
  auto pool = MakePool(35, 10);
  auto spec = MixtureSpec::ForCondition(Condition::kOV20, 35);
  auto dir = std::filesystem::temp_directory_path() / "sotkit_sim_test";
  std::string first;
  for (int run = 0; run < 2; ++run) {
    Session s = SynthesizeMixtureAudio(PlaceUtterances(pool, spec),
                                       ToneAudio(pool));
    auto d = dir / std::to_string(run);
    std::filesystem::create_directories(d);
    WriteSessionAudio(s, d);
    const std::string bytes = ReadBytes(d / *s.audio.mixture);
    if (run == 0) first = bytes;
    else EXPECT_EQ(bytes, first);
  }
}

}  // namespace
}  // namespace sotkit
