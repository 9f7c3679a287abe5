#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sotkit/time.h"

namespace sotkit {

// Surface form of the channel-change marker. Reserved: never a valid word.
inline constexpr std::string_view kChannelChange = "<cc>";

using Waveform = std::vector<float>;

// Input could not be parsed. The message carries file/line/field context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimedToken {
  std::string text;
  Time start;
  Time end;

  bool operator==(const TimedToken&) const = default;
};

struct SpeakerTrack {
  std::string speaker_id;
  std::vector<TimedToken> tokens;

  bool operator==(const SpeakerTrack&) const = default;
};

// Paths of audio files belonging to a session, relative to the session file.
struct AudioRefs {
  std::optional<std::string> mixture;
  std::map<std::string, std::string> sources;  // speaker_id -> path

  bool empty() const { return !mixture && sources.empty(); }
  bool operator==(const AudioRefs&) const = default;
};

struct Session {
  std::string session_id;
  std::vector<SpeakerTrack> tracks;
  std::optional<int> sample_rate;
  std::optional<Waveform> mixture;
  std::map<std::string, Waveform> sources;
  AudioRefs audio;
  // Free-form string metadata (condition label, generator seed, ...).
  std::map<std::string, std::string> metadata;

  const SpeakerTrack* FindTrack(std::string_view speaker_id) const;
  size_t NumTokens() const;

  bool operator==(const Session&) const = default;
};

struct SegmentationParams {
  Time alpha;  // maximum span of speech activity inside one segment
  Time beta;   // maximum pause tolerated inside one segment

  static SegmentationParams Unbounded() {
    return {Time::Infinite(), Time::Infinite()};
  }
};

// Throws ValidationError unless alpha > 0, beta >= 0 and alpha > beta.
// alpha == beta == infinity is accepted as the "never break" setting.
void CheckParams(const SegmentationParams& params);

// Checked constructor: throws ValidationError on an invalid token.
TimedToken MakeToken(std::string text, double start_s, double end_s);

bool IsValidWord(std::string_view text);

struct Violation {
  enum class Kind {
    kBadToken,
    kTokenOrder,
    kTokenOverlap,
    kDuplicateSpeaker,
    kAudioMismatch,
  };
  Kind kind;
  std::string speaker_id;
  std::optional<size_t> token_index;
  std::string message;
};

std::string_view KindName(Violation::Kind kind);

// Empty iff every invariant of the session and its tokens holds.
std::vector<Violation> ValidateSession(const Session& session);

// Throws ValidationError summarizing ValidateSession() when it is non-empty.
void CheckSession(const Session& session);

// JSON interchange. Audio is referenced by path, never embedded.
Session SessionFromJson(std::string_view json_text, std::string_view context);
std::string SessionToJson(const Session& session, int indent = -1);

Session LoadSession(const std::filesystem::path& path);
void SaveSession(const Session& session, const std::filesystem::path& path);

// A corpus file holds one session per line (JSONL). A file that parses as a
// single JSON object is also accepted as a one-session corpus.
std::vector<Session> LoadCorpus(const std::filesystem::path& path);
void SaveCorpus(const std::vector<Session>& sessions,
                const std::filesystem::path& path);

// Reads the WAV files named in session.audio (relative to base_dir) into
// session.mixture / session.sources and sets session.sample_rate.
void AttachAudio(Session& session, const std::filesystem::path& base_dir);

// Writes mixture and sources as 16-bit WAVs under dir and fills session.audio
// with paths relative to dir.
void WriteSessionAudio(Session& session, const std::filesystem::path& dir);

}  // namespace sotkit
