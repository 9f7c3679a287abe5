#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sotkit/core.h"

namespace sotkit {

// A maximal run of one speaker's tokens under (alpha, beta).
struct Segment {
  std::string speaker_id;
  std::vector<TimedToken> tokens;
  size_t first_token_index = 0;  // index of tokens[0] in the source track

  Time start() const { return tokens.front().start; }
  Time end() const { return tokens.back().end; }
};

// Greedy left-to-right segmentation. A token t starts a new segment when
//   t.start - previous.end > beta          (pause too long), or
//   t.end - segment.start  > alpha         (speech span too long).
// Equality continues the segment. Segments are never split mid-token.
std::vector<Segment> ExtractSegments(const SpeakerTrack& track,
                                     const SegmentationParams& params);

enum class SotFormat { kSsot, kTsot, kSegsot };

std::string_view FormatName(SotFormat format);
SotFormat ParseFormat(std::string_view name);

struct Word {
  std::string text;
  // Producing speaker when known; empty for transcripts parsed from text.
  std::string speaker_id;

  bool operator==(const Word&) const = default;
};
struct ChannelChange {
  bool operator==(const ChannelChange&) const = default;
};
using TranscriptItem = std::variant<Word, ChannelChange>;

struct SerializedTranscript {
  std::vector<TranscriptItem> items;
  SotFormat format = SotFormat::kSsot;

  // Words and "<cc>" joined by single spaces.
  std::string ToString() const;
  std::vector<std::string> Words() const;  // markers dropped
  size_t NumWords() const;
};

// Parses a space-delimited transcript. Throws ParseError on a leading,
// trailing or doubled <cc>.
SerializedTranscript ParseTranscript(std::string_view text,
                                     SotFormat format = SotFormat::kSsot);

// One block per speaker, blocks ordered by first-token start time.
SerializedTranscript SerializeSsot(const Session& session);
// Every token ordered by start time; <cc> wherever the speaker changes.
SerializedTranscript SerializeTsot(const Session& session);
// Segments of all speakers ordered by segment start time.
SerializedTranscript SerializeSegsot(const Session& session,
                                     const SegmentationParams& params);

SerializedTranscript Serialize(const Session& session, SotFormat format,
                               const SegmentationParams& params);

struct SplitMode {
  enum class Kind { kCcSpans, kTsotParity };
  Kind kind = Kind::kCcSpans;
  int k = 2;  // number of virtual channels for kTsotParity

  static SplitMode CcSpans() { return {Kind::kCcSpans, 0}; }
  static SplitMode TsotParity(int k) { return {Kind::kTsotParity, k}; }
};

// kCcSpans: one stream per <cc>-delimited span.
// kTsotParity: K streams; span i is appended to stream i mod K.
std::vector<std::vector<std::string>> SplitChannels(
    const SerializedTranscript& transcript, const SplitMode& mode);

}  // namespace sotkit
