#include <gtest/gtest.h>

#include <algorithm>

#include "sotkit/score.h"
#include "sotkit/serialize.h"
#include "test_util.h"

namespace sotkit {
namespace {

WordStream Words(std::string_view text) {
  return ParseTranscript(text).Words();
}

// The trace must replay hyp and every reference stream in order and agree
// with the counts.
void ExpectConsistentTrace(const AlignmentResult& r, const WordStream& hyp,
                           const std::vector<WordStream>& refs) {
  size_t h = 0;
  std::vector<size_t> pos(refs.size(), 0);
  int64_t s = 0, d = 0, i = 0, m = 0;
  for (const auto& step : r.trace) {
    if (step.op != EditOp::kDeletion) {
      ASSERT_TRUE(step.hyp_index.has_value());
      ASSERT_EQ(*step.hyp_index, h++);
    }
    if (step.op != EditOp::kInsertion) {
      ASSERT_LT(step.ref_stream, refs.size());
      ASSERT_TRUE(step.ref_index.has_value());
      ASSERT_EQ(*step.ref_index, pos[step.ref_stream]++);
    }
    switch (step.op) {
      case EditOp::kMatch:
        ++m;
        ASSERT_EQ(hyp[*step.hyp_index], refs[step.ref_stream][*step.ref_index]);
        break;
      case EditOp::kSubstitution:
        ++s;
        ASSERT_NE(hyp[*step.hyp_index], refs[step.ref_stream][*step.ref_index]);
        break;
      case EditOp::kDeletion: ++d; break;
      case EditOp::kInsertion: ++i; break;
    }
  }
  ASSERT_EQ(h, hyp.size());
  for (size_t k = 0; k < refs.size(); ++k) ASSERT_EQ(pos[k], refs[k].size());
  ASSERT_EQ(s, r.substitutions);
  ASSERT_EQ(d, r.deletions);
  ASSERT_EQ(i, r.insertions);
  ASSERT_EQ(m, r.matches);
  ASSERT_EQ(r.substitutions + r.deletions + r.matches, r.ref_words);
  ASSERT_EQ(r.substitutions + r.insertions + r.matches, r.hyp_words);
}

WordStream RandomWords(CounterRng& rng, size_t max_len, size_t vocab) {
  static const char* kVocab[] = {"a", "b", "c", "d", "e"};
  WordStream w(rng.Below(max_len + 1));
  for (auto& x : w) x = kVocab[rng.Below(vocab)];
  return w;
}

TEST(Wer, Examples) {
  auto r = Wer(Words("a b c d e"), Words("a b c d e"));
  EXPECT_EQ(r.errors(), 0);
  EXPECT_EQ(r.wer(), 0.0);
  r = Wer({}, Words("a b c d"));
  EXPECT_EQ(r.deletions, 4);
  EXPECT_EQ(r.wer(), 1.0);
  r = Wer(Words("a x c"), Words("a b c"));
  EXPECT_EQ(r.substitutions, 1);
  EXPECT_EQ(r.errors(), 1);
  EXPECT_DOUBLE_EQ(r.wer(), 1.0 / 3.0);
  r = Wer(Words("a b"), {});
  EXPECT_EQ(r.insertions, 2);
  EXPECT_EQ(r.wer(), 2.0);
}

TEST(Wer, TracePrefersSubstitution) {
  auto r = Wer(Words("x"), Words("a"));
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].op, EditOp::kSubstitution);
}

TEST(Sagwer, Examples) {
  auto r = Sagwer(Words("hi"), {Words("hi")});
  EXPECT_EQ(r.wer(), 0.0);
  r = Sagwer(Words("hi"), {Words("hi"), Words("there")});
  EXPECT_EQ(r.deletions, 1);
  EXPECT_EQ(r.wer(), 0.5);
  r = SagwerBruteforce(Words("b a"), {Words("a"), Words("b")});
  EXPECT_EQ(r.wer(), 0.0);
  r = Sagwer(Words("b a"), {Words("a"), Words("b")});
  EXPECT_EQ(r.wer(), 0.0);
}

TEST(Sagwer, FixtureSerializationsScoreZero) {
  Session s = LoadSession(testing::FixturePath("three_speakers.json"));
  const auto refs = testing::TrackWords(s);
  const SegmentationParams params{Time::FromSeconds(5), Time::FromSeconds(0.5)};
  for (auto f : {SotFormat::kSsot, SotFormat::kTsot, SotFormat::kSegsot}) {
    const auto hyp = Serialize(s, f, params).Words();
    auto r = Sagwer(hyp, refs);
    EXPECT_EQ(r.errors(), 0) << FormatName(f);
    EXPECT_EQ(r.ref_words, 23);
    ExpectConsistentTrace(r, hyp, refs);
  }
}

TEST(Sagwer, MatchesBruteForceExactly) {
  CounterRng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<WordStream> refs(1 + rng.Below(3));
    for (auto& r : refs) r = RandomWords(rng, 5, 3);
    const WordStream hyp = RandomWords(rng, 8, 3);
    const auto dp = Sagwer(hyp, refs);
    // Three streams of five words have 756756 interleavings.
    const auto bf = SagwerBruteforce(hyp, refs, 1'000'000);
    ASSERT_EQ(dp.substitutions, bf.substitutions) << trial;
    ASSERT_EQ(dp.deletions, bf.deletions) << trial;
    ASSERT_EQ(dp.insertions, bf.insertions) << trial;
    ASSERT_EQ(dp.wer(), bf.wer()) << trial;
    ExpectConsistentTrace(dp, hyp, refs);
    ExpectConsistentTrace(bf, hyp, refs);
  }
}

TEST(Sagwer, SingleStreamIsWer) {
  CounterRng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    const WordStream ref = RandomWords(rng, 10, 4);
    const WordStream hyp = RandomWords(rng, 10, 4);
    const auto a = Sagwer(hyp, {ref});
    const auto b = Wer(hyp, ref);
    ASSERT_EQ(a.substitutions, b.substitutions);
    ASSERT_EQ(a.deletions, b.deletions);
    ASSERT_EQ(a.insertions, b.insertions);
    const auto c = SagwerBruteforce(hyp, {ref});
    ASSERT_EQ(c.errors(), b.errors());
  }
}

TEST(Sagwer, InvariantUnderStreamOrder) {
  CounterRng rng(33);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<WordStream> refs(2 + rng.Below(3));
    for (auto& r : refs) r = RandomWords(rng, 5, 4);
    const WordStream hyp = RandomWords(rng, 12, 4);
    const auto base = Sagwer(hyp, refs);
    std::reverse(refs.begin(), refs.end());
    const auto rev = Sagwer(hyp, refs);
    ASSERT_EQ(base.substitutions, rev.substitutions);
    ASSERT_EQ(base.deletions, rev.deletions);
    ASSERT_EQ(base.insertions, rev.insertions);
  }
}

// An unmatchable hyp word costs one insertion against a perfect match. In
// general it can also turn a deletion into a substitution, so the error
// count grows by zero or one.
TEST(Sagwer, UnmatchableWordCostsAtMostOne) {
  CounterRng rng(34);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<WordStream> refs(1 + rng.Below(3));
    for (auto& r : refs) r = RandomWords(rng, 5, 3);
    WordStream hyp = RandomWords(rng, 8, 3);
    const auto before = Sagwer(hyp, refs);
    hyp.insert(hyp.begin() + rng.Below(hyp.size() + 1), "zzz");
    const auto after = Sagwer(hyp, refs);
    ASSERT_GE(after.errors(), before.errors());
    ASSERT_LE(after.errors(), before.errors() + 1);
    if (before.deletions == 0) {
      ASSERT_EQ(after.errors(), before.errors() + 1);
    }
  }
  const auto r = Sagwer(Words("a b zzz c"), {Words("a c"), Words("b")});
  EXPECT_EQ(r.insertions, 1);
  EXPECT_EQ(r.errors(), 1);
}

TEST(Sagwer, SerializationsOfRandomSessionsScoreZero) {
  CounterRng rng(35);
  const SegmentationParams params{Time::FromSeconds(5), Time::FromSeconds(0.5)};
  for (int trial = 0; trial < 100; ++trial) {
    Session s = testing::RandomSession(rng, 4, 6);
    const auto refs = testing::TrackWords(s);
    for (auto f : {SotFormat::kSsot, SotFormat::kTsot, SotFormat::kSegsot})
      ASSERT_EQ(Sagwer(Serialize(s, f, params).Words(), refs).errors(), 0);
  }
}

TEST(Sagwer, CapacityLimits) {
  std::vector<WordStream> five(5, Words("a"));
  try {
    Sagwer(Words("a"), five);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("states"), std::string::npos)
        << e.what();
  }
  SagwerOptions opts;
  opts.max_streams = 5;
  EXPECT_NO_THROW(Sagwer(Words("a"), five, opts));
  opts.max_states = 10;
  EXPECT_THROW(Sagwer(Words("a a a a a"), five, opts), CapacityError);
  std::vector<WordStream> big(3, WordStream(20, "a"));
  EXPECT_THROW(SagwerBruteforce(Words("a"), big), CapacityError);
  EXPECT_THROW(Sagwer(Words("a"), {}), std::invalid_argument);
}

TEST(Sagwer, BeamIsUpperBoundAndExactWhenWide) {
  CounterRng rng(36);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<WordStream> refs(1 + rng.Below(3));
    for (auto& r : refs) r = RandomWords(rng, 6, 3);
    const WordStream hyp = RandomWords(rng, 10, 3);
    const auto exact = Sagwer(hyp, refs);
    SagwerOptions narrow;
    narrow.beam = 2;
    const auto approx = Sagwer(hyp, refs, narrow);
    ASSERT_GE(approx.errors(), exact.errors());
    ExpectConsistentTrace(approx, hyp, refs);
    SagwerOptions wide;
    wide.beam = 1'000'000;
    ASSERT_EQ(Sagwer(hyp, refs, wide).errors(), exact.errors());
  }
}

TEST(Interleavings, Counts) {
  EXPECT_EQ(CountInterleavings({Words("a b"), Words("c")}), 3u);
  EXPECT_EQ(CountInterleavings({Words("a b"), Words("c d"), Words("e")}), 30u);
  EXPECT_EQ(CountInterleavings({WordStream(200, "a"), WordStream(200, "b")}),
            UINT64_MAX);
}

TEST(Macro, Mean) {
  EXPECT_EQ(MacroAverage({{"only", 4.2}}), 4.2);
  EXPECT_NEAR(MacroAverage({{"a", 1.0}, {"b", 2.0}, {"c", 6.0}}), 3.0, 1e-12);
  EXPECT_THROW(MacroAverage({}), std::invalid_argument);
}

TEST(Macro, FlagsInconsistentPublishedAverage) {
  const std::map<std::string, double> row{{"0L", 7.23},  {"0S", 7.61},
                                          {"OV10", 8.54}, {"OV20", 10.09},
                                          {"OV30", 11.80}, {"OV40", 13.97}};
  auto check = CheckReportedAverage(row, 10.22);
  EXPECT_NEAR(check.computed, 9.873333, 1e-5);
  EXPECT_FALSE(check.consistent);
  EXPECT_FALSE(check.note.empty());
  EXPECT_TRUE(CheckReportedAverage(row, 9.87).consistent);
}

}  // namespace
}  // namespace sotkit
