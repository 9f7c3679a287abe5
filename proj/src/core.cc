#include "sotkit/core.h"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "sotkit/wav.h"

namespace sotkit {

using nlohmann::json;

const SpeakerTrack* Session::FindTrack(std::string_view speaker_id) const {
  for (const auto& track : tracks)
    if (track.speaker_id == speaker_id) return &track;
  return nullptr;
}

size_t Session::NumTokens() const {
  size_t n = 0;
  for (const auto& track : tracks) n += track.tokens.size();
  return n;
}

void CheckParams(const SegmentationParams& params) {
  if (params.alpha <= Time()) throw ValidationError("alpha must be > 0");
  if (params.beta < Time()) throw ValidationError("beta must be >= 0");
  const bool both_infinite =
      params.alpha.is_infinite() && params.beta.is_infinite();
  if (!both_infinite && !(params.alpha > params.beta)) {
    throw ValidationError(fmt::format("alpha ({}) must exceed beta ({})",
                                      params.alpha.ToString(),
                                      params.beta.ToString()));
  }
}

bool IsValidWord(std::string_view text) {
  if (text.empty() || text == kChannelChange) return false;
  return std::none_of(text.begin(), text.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
           c == '\f';
  });
}

namespace {

std::optional<std::string> TokenProblem(const TimedToken& token) {
  if (!IsValidWord(token.text)) {
    return fmt::format("invalid word '{}' (empty, whitespace or reserved)",
                       token.text);
  }
  if (token.start < Time())
    return fmt::format("'{}' starts before 0", token.text);
  if (!(token.end > token.start)) {
    return fmt::format("'{}' has end {} <= start {}", token.text,
                       token.end.ToString(), token.start.ToString());
  }
  return std::nullopt;
}

}  // namespace

TimedToken MakeToken(std::string text, double start_s, double end_s) {
  TimedToken token{std::move(text), Time::FromSeconds(start_s),
                   Time::FromSeconds(end_s)};
  if (auto problem = TokenProblem(token)) throw ValidationError(*problem);
  return token;
}

std::string_view KindName(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::kBadToken: return "bad_token";
    case Violation::Kind::kTokenOrder: return "token_order";
    case Violation::Kind::kTokenOverlap: return "token_overlap";
    case Violation::Kind::kDuplicateSpeaker: return "duplicate_speaker";
    case Violation::Kind::kAudioMismatch: return "audio_mismatch";
  }
  return "unknown";
}

std::vector<Violation> ValidateSession(const Session& session) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  for (const auto& track : session.tracks) {
    if (!seen.insert(track.speaker_id).second) {
      out.push_back({Violation::Kind::kDuplicateSpeaker, track.speaker_id,
                     std::nullopt,
                     fmt::format("speaker '{}' appears more than once",
                                 track.speaker_id)});
    }
    for (size_t i = 0; i < track.tokens.size(); ++i) {
      const auto& token = track.tokens[i];
      if (auto problem = TokenProblem(token)) {
        out.push_back(
            {Violation::Kind::kBadToken, track.speaker_id, i, *problem});
      }
      if (i == 0) continue;
      const auto& prev = track.tokens[i - 1];
      if (!(token.start > prev.start)) {
        out.push_back({Violation::Kind::kTokenOrder, track.speaker_id, i,
                       fmt::format("token {} '{}' does not start after token "
                                   "{} '{}'",
                                   i, token.text, i - 1, prev.text)});
      } else if (prev.end > token.start) {
        out.push_back({Violation::Kind::kTokenOverlap, track.speaker_id, i,
                       fmt::format("token {} '{}' [{}, {}] overlaps token {} "
                                   "'{}' [{}, {}]",
                                   i - 1, prev.text, prev.start.ToString(),
                                   prev.end.ToString(), i, token.text,
                                   token.start.ToString(),
                                   token.end.ToString())});
      }
    }
  }
  for (const auto& [speaker, wave] : session.sources) {
    if (!seen.count(speaker)) {
      out.push_back({Violation::Kind::kAudioMismatch, speaker, std::nullopt,
                     fmt::format("source audio for unknown speaker '{}'",
                                 speaker)});
    }
    if (session.mixture && wave.size() != session.mixture->size()) {
      out.push_back({Violation::Kind::kAudioMismatch, speaker, std::nullopt,
                     fmt::format("source '{}' has {} samples, mixture has {}",
                                 speaker, wave.size(),
                                 session.mixture->size())});
    }
  }
  if ((session.mixture || !session.sources.empty()) && !session.sample_rate) {
    out.push_back({Violation::Kind::kAudioMismatch, "", std::nullopt,
                   "audio attached without a sample_rate"});
  }
  return out;
}

void CheckSession(const Session& session) {
  auto violations = ValidateSession(session);
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << "session '" << session.session_id << "': " << violations.size()
      << " violation(s)";
  for (const auto& v : violations) {
    msg << "\n  [" << KindName(v.kind) << "]";
    if (!v.speaker_id.empty()) msg << " speaker '" << v.speaker_id << "'";
    if (v.token_index) msg << " token " << *v.token_index;
    msg << ": " << v.message;
  }
  throw ValidationError(msg.str());
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const json& Field(const json& obj, const char* key, std::string_view where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError(fmt::format("{}: missing field '{}'", where, key));
  return obj.at(key);
}

std::string StringField(const json& obj, const char* key,
                        std::string_view where) {
  const json& v = Field(obj, key, where);
  if (!v.is_string())
    throw ParseError(fmt::format("{}.{}: expected string", where, key));
  return v.get<std::string>();
}

Time TimeField(const json& obj, const char* key, std::string_view where) {
  const json& v = Field(obj, key, where);
  if (!v.is_number())
    throw ParseError(fmt::format("{}.{}: expected number", where, key));
  return Time::FromSeconds(v.get<double>());
}

}  // namespace

Session SessionFromJson(std::string_view json_text, std::string_view context) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", context, e.what()));
  }
  if (!doc.is_object())
    throw ParseError(fmt::format("{}: expected a JSON object", context));

  Session s;
  s.session_id = StringField(doc, "session_id", context);
  if (doc.contains("sample_rate") && !doc["sample_rate"].is_null()) {
    if (!doc["sample_rate"].is_number_integer())
      throw ParseError(fmt::format("{}.sample_rate: expected integer", context));
    s.sample_rate = doc["sample_rate"].get<int>();
  }
  const json& speakers = Field(doc, "speakers", context);
  if (!speakers.is_array())
    throw ParseError(fmt::format("{}.speakers: expected array", context));
  for (size_t si = 0; si < speakers.size(); ++si) {
    const std::string where = fmt::format("{}.speakers[{}]", context, si);
    SpeakerTrack track;
    track.speaker_id = StringField(speakers[si], "speaker_id", where);
    const json& tokens = Field(speakers[si], "tokens", where);
    if (!tokens.is_array())
      throw ParseError(fmt::format("{}.tokens: expected array", where));
    for (size_t ti = 0; ti < tokens.size(); ++ti) {
      const std::string twhere = fmt::format("{}.tokens[{}]", where, ti);
      track.tokens.push_back({StringField(tokens[ti], "text", twhere),
                              TimeField(tokens[ti], "start", twhere),
                              TimeField(tokens[ti], "end", twhere)});
    }
    if (speakers[si].contains("audio"))
      s.audio.sources[track.speaker_id] =
          StringField(speakers[si], "audio", where);
    s.tracks.push_back(std::move(track));
  }
  if (doc.contains("mixture_audio"))
    s.audio.mixture = StringField(doc, "mixture_audio", context);
  if (doc.contains("metadata")) {
    const json& meta = doc["metadata"];
    if (!meta.is_object())
      throw ParseError(fmt::format("{}.metadata: expected object", context));
    for (const auto& [k, v] : meta.items()) {
      s.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }

  auto violations = ValidateSession(s);
  if (!violations.empty()) {
    const auto& v = violations.front();
    std::string msg = fmt::format("{}: session '{}': {}", context,
                                  s.session_id, v.message);
    if (!v.speaker_id.empty()) msg += fmt::format(" (speaker '{}'", v.speaker_id);
    if (v.token_index) msg += fmt::format(", token {}", *v.token_index);
    if (!v.speaker_id.empty()) msg += ")";
    throw ValidationError(msg);
  }
  return s;
}

std::string SessionToJson(const Session& session, int indent) {
  json doc = json::object();
  doc["session_id"] = session.session_id;
  if (session.sample_rate) doc["sample_rate"] = *session.sample_rate;
  json speakers = json::array();
  for (const auto& track : session.tracks) {
    json t = json::object();
    t["speaker_id"] = track.speaker_id;
    json tokens = json::array();
    for (const auto& tok : track.tokens) {
      tokens.push_back(json{{"text", tok.text},
                            {"start", tok.start.seconds()},
                            {"end", tok.end.seconds()}});
    }
    t["tokens"] = std::move(tokens);
    if (auto it = session.audio.sources.find(track.speaker_id);
        it != session.audio.sources.end()) {
      t["audio"] = it->second;
    }
    speakers.push_back(std::move(t));
  }
  doc["speakers"] = std::move(speakers);
  if (session.audio.mixture) doc["mixture_audio"] = *session.audio.mixture;
  if (!session.metadata.empty()) doc["metadata"] = session.metadata;
  return doc.dump(indent);
}

namespace {

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("{}: cannot open file", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error(
        fmt::format("{}: cannot open for writing", path.string()));
  out << text;
  if (!out)
    throw std::runtime_error(fmt::format("{}: write failed", path.string()));
}

}  // namespace

Session LoadSession(const std::filesystem::path& path) {
  return SessionFromJson(ReadFile(path), path.string());
}

void SaveSession(const Session& session, const std::filesystem::path& path) {
  WriteFile(path, SessionToJson(session, 2) + "\n");
}

std::vector<Session> LoadCorpus(const std::filesystem::path& path) {
  const std::string text = ReadFile(path);
  // A pretty-printed single session is accepted as well as JSONL.
  if (json::accept(text)) {
    json doc = json::parse(text);
    if (doc.is_object()) return {SessionFromJson(text, path.string())};
  }
  std::vector<Session> out;
  std::istringstream in(text);
  std::string line;
  for (size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(
        SessionFromJson(line, fmt::format("{}:{}", path.string(), lineno)));
  }
  return out;
}

void SaveCorpus(const std::vector<Session>& sessions,
                const std::filesystem::path& path) {
  std::string text;
  for (const auto& s : sessions) text += SessionToJson(s) + "\n";
  WriteFile(path, text);
}

void AttachAudio(Session& session, const std::filesystem::path& base_dir) {
  auto load = [&](const std::string& rel) {
    WavData wav = ReadWav(base_dir / rel);
    if (session.sample_rate && *session.sample_rate != wav.sample_rate) {
      throw ValidationError(fmt::format(
          "{}: sample rate {} does not match session rate {}", rel,
          wav.sample_rate, *session.sample_rate));
    }
    session.sample_rate = wav.sample_rate;
    return std::move(wav.samples);
  };
  if (session.audio.mixture) session.mixture = load(*session.audio.mixture);
  for (const auto& [speaker, rel] : session.audio.sources)
    session.sources[speaker] = load(rel);
  CheckSession(session);
}

void WriteSessionAudio(Session& session, const std::filesystem::path& dir) {
  if (!session.sample_rate)
    throw ValidationError("cannot write audio without a sample_rate");
  std::filesystem::create_directories(dir);
  const int rate = *session.sample_rate;
  if (session.mixture) {
    const std::string rel = session.session_id + ".mix.wav";
    WriteWav(dir / rel, *session.mixture, rate);
    session.audio.mixture = rel;
  }
  for (const auto& [speaker, wave] : session.sources) {
    const std::string rel = session.session_id + "." + speaker + ".wav";
    WriteWav(dir / rel, wave, rate);
    session.audio.sources[speaker] = rel;
  }
}

}  // namespace sotkit
