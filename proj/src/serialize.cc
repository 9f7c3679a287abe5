#include "sotkit/serialize.h"

#include <fmt/format.h>

#include <algorithm>
#include <sstream>
#include <tuple>

namespace sotkit {

std::vector<Segment> ExtractSegments(const SpeakerTrack& track,
                                     const SegmentationParams& params) {
  CheckParams(params);
  std::vector<Segment> segments;
  for (size_t i = 0; i < track.tokens.size(); ++i) {
    const TimedToken& token = track.tokens[i];
    bool open_new = segments.empty();
    if (!open_new) {
      const Segment& current = segments.back();
      const Time pause = token.start - current.tokens.back().end;
      const Time span = token.end - current.start();
      open_new = pause > params.beta || span > params.alpha;
    }
    if (open_new) segments.push_back({track.speaker_id, {}, i});
    segments.back().tokens.push_back(token);
  }
  return segments;
}

std::string_view FormatName(SotFormat format) {
  switch (format) {
    case SotFormat::kSsot: return "ssot";
    case SotFormat::kTsot: return "tsot";
    case SotFormat::kSegsot: return "segsot";
  }
  return "?";
}

SotFormat ParseFormat(std::string_view name) {
  if (name == "ssot") return SotFormat::kSsot;
  if (name == "tsot") return SotFormat::kTsot;
  if (name == "segsot") return SotFormat::kSegsot;
  throw ParseError(fmt::format("unknown serialization format '{}'", name));
}

std::string SerializedTranscript::ToString() const {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ' ';
    if (const auto* w = std::get_if<Word>(&item))
      out += w->text;
    else
      out += kChannelChange;
  }
  return out;
}

std::vector<std::string> SerializedTranscript::Words() const {
  std::vector<std::string> out;
  for (const auto& item : items)
    if (const auto* w = std::get_if<Word>(&item)) out.push_back(w->text);
  return out;
}

size_t SerializedTranscript::NumWords() const {
  return static_cast<size_t>(std::count_if(
      items.begin(), items.end(),
      [](const TranscriptItem& i) { return std::holds_alternative<Word>(i); }));
}

SerializedTranscript ParseTranscript(std::string_view text, SotFormat format) {
  SerializedTranscript out;
  out.format = format;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    if (tok == kChannelChange) {
      if (out.items.empty())
        throw ParseError("transcript begins with a channel change");
      if (std::holds_alternative<ChannelChange>(out.items.back()))
        throw ParseError("transcript has consecutive channel changes");
      out.items.emplace_back(ChannelChange{});
    } else {
      out.items.emplace_back(Word{tok, ""});
    }
  }
  if (!out.items.empty() &&
      std::holds_alternative<ChannelChange>(out.items.back())) {
    throw ParseError("transcript ends with a channel change");
  }
  return out;
}

namespace {

// Appends tokens, inserting <cc> whenever the producing speaker changes.
class Emitter {
 public:
  explicit Emitter(SotFormat format) { out_.format = format; }

  void Emit(const std::string& speaker, const std::string& text) {
    if (!out_.items.empty() && speaker != last_speaker_)
      out_.items.emplace_back(ChannelChange{});
    out_.items.emplace_back(Word{text, speaker});
    last_speaker_ = speaker;
  }

  SerializedTranscript Take() { return std::move(out_); }

 private:
  SerializedTranscript out_;
  std::string last_speaker_;
};

}  // namespace

SerializedTranscript SerializeSsot(const Session& session) {
  std::vector<const SpeakerTrack*> order;
  for (const auto& track : session.tracks)
    if (!track.tokens.empty()) order.push_back(&track);
  std::sort(order.begin(), order.end(),
            [](const SpeakerTrack* a, const SpeakerTrack* b) {
              return std::tie(a->tokens.front().start, a->speaker_id) <
                     std::tie(b->tokens.front().start, b->speaker_id);
            });
  Emitter emit(SotFormat::kSsot);
  for (const SpeakerTrack* track : order)
    for (const auto& token : track->tokens)
      emit.Emit(track->speaker_id, token.text);
  return emit.Take();
}

SerializedTranscript SerializeTsot(const Session& session) {
  struct Ref {
    Time start;
    const std::string* speaker;
    size_t index;
    const TimedToken* token;
  };
  std::vector<Ref> refs;
  refs.reserve(session.NumTokens());
  for (const auto& track : session.tracks)
    for (size_t i = 0; i < track.tokens.size(); ++i)
      refs.push_back({track.tokens[i].start, &track.speaker_id, i,
                      &track.tokens[i]});
  std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    return std::tie(a.start, *a.speaker, a.index) <
           std::tie(b.start, *b.speaker, b.index);
  });
  Emitter emit(SotFormat::kTsot);
  for (const Ref& r : refs) emit.Emit(*r.speaker, r.token->text);
  return emit.Take();
}

SerializedTranscript SerializeSegsot(const Session& session,
                                     const SegmentationParams& params) {
  std::vector<Segment> segments;
  for (const auto& track : session.tracks) {
    auto segs = ExtractSegments(track, params);
    std::move(segs.begin(), segs.end(), std::back_inserter(segments));
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment& a, const Segment& b) {
                     return std::make_tuple(a.start(), std::cref(a.speaker_id),
                                            a.first_token_index) <
                            std::make_tuple(b.start(), std::cref(b.speaker_id),
                                            b.first_token_index);
                   });
  Emitter emit(SotFormat::kSegsot);
  for (const Segment& seg : segments)
    for (const auto& token : seg.tokens) emit.Emit(seg.speaker_id, token.text);
  return emit.Take();
}

SerializedTranscript Serialize(const Session& session, SotFormat format,
                               const SegmentationParams& params) {
  switch (format) {
    case SotFormat::kSsot: return SerializeSsot(session);
    case SotFormat::kTsot: return SerializeTsot(session);
    case SotFormat::kSegsot: return SerializeSegsot(session, params);
  }
  throw std::logic_error("unhandled format");
}

std::vector<std::vector<std::string>> SplitChannels(
    const SerializedTranscript& transcript, const SplitMode& mode) {
  if (mode.kind == SplitMode::Kind::kTsotParity && mode.k < 1)
    throw ValidationError(
        fmt::format("tsot parity needs K >= 1, got {}", mode.k));

  std::vector<std::vector<std::string>> spans(1);
  for (const auto& item : transcript.items) {
    if (const auto* w = std::get_if<Word>(&item))
      spans.back().push_back(w->text);
    else
      spans.emplace_back();
  }
  if (transcript.items.empty()) spans.clear();
  if (mode.kind == SplitMode::Kind::kCcSpans) return spans;

  const size_t k = static_cast<size_t>(mode.k);
  std::vector<std::vector<std::string>> streams(std::min(k, spans.size()));
  for (size_t i = 0; i < spans.size(); ++i) {
    auto& dst = streams[i % k];
    dst.insert(dst.end(), spans[i].begin(), spans[i].end());
  }
  return streams;
}

}  // namespace sotkit
