#include "cli.h"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "manifest.h"
#include "sotkit/audit.h"
#include "sotkit/core.h"
#include "sotkit/css.h"
#include "sotkit/features.h"
#include "sotkit/rng.h"
#include "sotkit/score.h"
#include "sotkit/serialize.h"
#include "sotkit/simulate.h"
#include "sotkit/wav.h"

namespace sotkit::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Globals {
  int jobs = 1;
  std::optional<uint64_t> seed;
  std::string command_line;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any call is rethrown after all workers stop.
void ParallelFor(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

void RequireFile(const fs::path& path) {
  if (!fs::is_regular_file(path))
    throw ValidationError(fmt::format("{}: no such file", path.string()));
}

std::vector<Session> ReadCorpus(const fs::path& path) {
  RequireFile(path);
  return LoadCorpus(path);
}

struct TranscriptLine {
  std::string session_id;
  std::string text;
};

std::vector<TranscriptLine> ReadTranscripts(const fs::path& path) {
  RequireFile(path);
  std::ifstream in(path);
  std::vector<TranscriptLine> lines;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw sotkit::ParseError(fmt::format(
          "{}:{}: expected '<session_id><TAB><transcript>'", path.string(), n));
    lines.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return lines;
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot write", path.string()));
  out << text;
}

// Output goes to `path`, or to `out` when path is empty or "-".
void Emit(const std::string& path, const std::string& text, std::ostream& out,
          RunManifest& manifest, const std::string& manifest_path) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  WriteText(path, text);
  manifest.AddOutput(path);
  manifest.Write(manifest_path.empty() ? path + ".manifest.json" : manifest_path);
}

RunManifest NewManifest(const Globals& g) {
  RunManifest m;
  m.command_line = g.command_line;
  m.tool_version = kVersion;
  return m;
}

uint64_t PickSeed(const std::optional<uint64_t>& local, const Globals& g) {
  return local ? *local : g.seed.value_or(0);
}

SegmentationParams Params(double alpha, double beta) {
  SegmentationParams p{Time::FromSeconds(alpha), Time::FromSeconds(beta)};
  CheckParams(p);
  return p;
}

// ---------------------------------------------------------------------------
// Utterance pools

std::vector<SpeakerTrack> SyntheticPool(uint64_t seed, size_t n) {
  static const char* kWords[] = {
      "the",  "a",    "we",    "you",   "it",    "is",     "was",   "and",
      "so",   "okay", "right", "yes",   "no",    "think",  "maybe", "well",
      "just", "that", "this",  "going", "model", "speech", "data",  "time",
      "next", "week", "meet",  "plan",  "good",  "idea",   "sure",  "now"};
  CounterRng rng(seed, 0x9001);
  std::vector<SpeakerTrack> pool;
  for (size_t i = 0; i < n; ++i) {
    SpeakerTrack t{fmt::format("u{}", i), {}};
    int64_t ms = 0;
    const size_t words = 4 + rng.Below(9);
    for (size_t w = 0; w < words; ++w) {
      if (w > 0) ms += 10 * int64_t(rng.Below(31));
      const int64_t len = 150 + 10 * int64_t(rng.Below(46));
      t.tokens.push_back({kWords[rng.Below(std::size(kWords))],
                          Time::FromMicros(ms * 1000),
                          Time::FromMicros((ms + len) * 1000)});
      ms += len;
    }
    pool.push_back(std::move(t));
  }
  return pool;
}

// Every track of every session becomes one template, shifted to start at 0.
std::vector<SpeakerTrack> PoolFromCorpus(const std::vector<Session>& corpus) {
  std::vector<SpeakerTrack> pool;
  for (const auto& s : corpus) {
    for (const auto& track : s.tracks) {
      if (track.tokens.empty()) continue;
      SpeakerTrack t = track;
      const Time shift = t.tokens.front().start;
      for (auto& tok : t.tokens) {
        tok.start = tok.start - shift;
        tok.end = tok.end - shift;
      }
      pool.push_back(std::move(t));
    }
  }
  if (pool.empty()) throw ValidationError("utterance pool has no tokens");
  return pool;
}

double TemplateFrequency(size_t template_index) {
  return 150.0 + 37.0 * double(template_index % 23);
}

struct SimulateRequest {
  std::vector<SpeakerTrack> pool;
  MixtureSpec spec;
  size_t sessions = 1;
  size_t per_session = 0;  // 0 = whole pool
  int sample_rate = 16000;
  bool audio = true;
};

Session SimulateOne(const SimulateRequest& req, size_t index) {
  std::vector<SpeakerTrack> pool = req.pool;
  if (req.per_session > 0 && req.per_session < pool.size()) {
    CounterRng rng(req.spec.seed, 0x5e55'0000 + index);
    for (size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng.Below(i)]);
    pool.resize(req.per_session);
  }
  MixtureSpec spec = req.spec;
  spec.seed = req.spec.seed + index;
  const Simulation sim = PlaceUtterances(
      pool, spec,
      fmt::format("{}_s{}_{:03d}", ConditionName(spec.condition), req.spec.seed,
                  index));
  if (!req.audio) return sim.session;
  std::vector<WavData> audio;
  for (size_t i = 0; i < pool.size(); ++i)
    audio.push_back(
        RenderTokenTones(pool[i], TemplateFrequency(i), req.sample_rate));
  return SynthesizeMixtureAudio(sim, audio);
}

std::vector<Session> SimulateAll(const SimulateRequest& req, int jobs) {
  std::vector<Session> out(req.sessions);
  ParallelFor(req.sessions, jobs, [&](size_t i) { out[i] = SimulateOne(req, i); });
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

struct Scored {
  std::string session_id;
  std::string condition;
  AlignmentResult result;
};

WordStream Lower(WordStream words, bool lowercase) {
  if (lowercase)
    for (auto& w : words)
      std::transform(w.begin(), w.end(), w.begin(),
                     [](unsigned char c) { return std::tolower(c); });
  return words;
}

std::vector<WordStream> ReferenceStreams(const Session& s, bool lowercase) {
  std::vector<WordStream> refs;
  for (const auto& track : s.tracks) {
    WordStream w;
    for (const auto& tok : track.tokens) w.push_back(tok.text);
    refs.push_back(Lower(std::move(w), lowercase));
  }
  if (refs.empty()) refs.emplace_back();
  return refs;
}

std::string ConditionOf(const Session& s) {
  auto it = s.metadata.find("condition");
  return it == s.metadata.end() ? "all" : it->second;
}

struct ScoreSummary {
  std::map<std::string, double> per_condition;  // WER percent
  std::map<std::string, std::pair<int64_t, int64_t>> counts;  // errors, words
  double macro = 0.0;
};

ScoreSummary Summarize(const std::vector<Scored>& scored) {
  ScoreSummary s;
  for (const auto& r : scored) {
    auto& [errors, words] = s.counts[r.condition];
    errors += r.result.errors();
    words += r.result.ref_words;
  }
  for (const auto& [cond, c] : s.counts)
    s.per_condition[cond] =
        100.0 * double(c.first) / double(c.second > 0 ? c.second : 1);
  if (!s.per_condition.empty()) s.macro = MacroAverage(s.per_condition);
  return s;
}

json ScoreJson(const std::vector<Scored>& scored, const ScoreSummary& summary) {
  json j;
  j["sessions"] = json::object();
  for (const auto& r : scored)
    j["sessions"][r.session_id] = {{"condition", r.condition},
                                   {"S", r.result.substitutions},
                                   {"D", r.result.deletions},
                                   {"I", r.result.insertions},
                                   {"ref_words", r.result.ref_words},
                                   {"wer", r.result.wer()}};
  json agg;
  int64_t errors = 0, words = 0;
  for (const auto& [cond, c] : summary.counts) {
    agg["per_condition"][cond] = {{"errors", c.first},
                                  {"ref_words", c.second},
                                  {"wer_percent", summary.per_condition.at(cond)}};
    errors += c.first;
    words += c.second;
  }
  agg["errors"] = errors;
  agg["ref_words"] = words;
  agg["wer"] = double(errors) / double(words > 0 ? words : 1);
  agg["macro_average_percent"] = summary.macro;
  j["aggregate"] = agg;
  return j;
}

std::string ScoreTable(const ScoreSummary& s, bool per_condition, bool macro) {
  std::string out;
  if (per_condition) {
    out += fmt::format("{:<12} {:>10} {:>8} {:>8}\n", "condition", "ref_words",
                       "errors", "WER%");
    for (const auto& [cond, c] : s.counts)
      out += fmt::format("{:<12} {:>10} {:>8} {:>8.2f}\n", cond, c.second,
                         c.first, s.per_condition.at(cond));
  }
  if (macro) out += fmt::format("{:<12} {:>28.2f}\n", "Avg.", s.macro);
  if (!per_condition && !macro) {
    int64_t e = 0, w = 0;
    for (const auto& [_, c] : s.counts) {
      e += c.first;
      w += c.second;
    }
    out += fmt::format("WER {:.2f}% ({} errors / {} words)\n",
                       100.0 * double(e) / double(w > 0 ? w : 1), e, w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SimulateArgs {
  std::string pool;
  size_t synthetic_pool = 0;
  std::string condition = "OV30";
  std::optional<double> overlap;
  size_t sessions = 1;
  size_t per_session = 0;
  int speakers = 2;
  double mix_probability = 2.0 / 3.0;
  std::optional<uint64_t> seed;
  std::string out;
  bool no_audio = false;
  int sample_rate = 16000;
};

int DoSimulate(const SimulateArgs& a, const Globals& g, std::ostream& out) {
  RunManifest manifest = NewManifest(g);
  SimulateRequest req;
  if (!a.pool.empty()) {
    req.pool = PoolFromCorpus(ReadCorpus(a.pool));
    manifest.AddInput(a.pool);
  } else if (a.synthetic_pool > 0) {
    req.pool = SyntheticPool(PickSeed(a.seed, g), a.synthetic_pool);
  } else {
    throw ValidationError("simulate needs --pool or --synthetic-pool");
  }
  const uint64_t seed = PickSeed(a.seed, g);
  req.spec = MixtureSpec::ForCondition(ParseCondition(a.condition), seed);
  if (a.overlap) {
    if (req.spec.condition != Condition::kCustom)
      throw ValidationError("--overlap needs --condition custom");
    req.spec.target_overlap_ratio = *a.overlap;
  }
  req.spec.num_speakers = a.speakers;
  req.spec.mix_probability = a.mix_probability;
  req.sessions = a.sessions;
  req.per_session = a.per_session;
  req.sample_rate = a.sample_rate;
  req.audio = !a.no_audio;
  CheckSpec(req.spec);

  std::vector<Session> sessions = SimulateAll(req, g.jobs);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  for (auto& s : sessions) {
    if (req.audio) {
      WriteSessionAudio(s, dir);
      manifest.AddOutput(dir / *s.audio.mixture);
      for (const auto& [_, p] : s.audio.sources) manifest.AddOutput(dir / p);
    }
  }
  SaveCorpus(sessions, dir / "sessions.jsonl");
  manifest.AddOutput(dir / "sessions.jsonl");
  manifest.seeds["simulate"] = std::to_string(seed);
  manifest.Write(dir / "manifest.json");
  for (const auto& s : sessions)
    out << fmt::format("{}\toverlap_ratio={}\tevents={}\tmixed={}\n",
                       s.session_id, s.metadata.at("overlap_ratio"),
                       s.metadata.at("events"), s.metadata.at("mixed_events"));
  return kOk;
}

struct SerializeArgs {
  std::string format = "segsot";
  double alpha = 5.0;
  double beta = 0.5;
  std::string input;
  std::string output;
  std::string manifest;
};

int DoSerialize(const SerializeArgs& a, const Globals& g, std::ostream& out) {
  const SotFormat format = ParseFormat(a.format);
  const SegmentationParams params = Params(a.alpha, a.beta);
  const auto sessions = ReadCorpus(a.input);
  std::vector<std::string> lines(sessions.size());
  ParallelFor(sessions.size(), g.jobs, [&](size_t i) {
    lines[i] = fmt::format("{}\t{}\n", sessions[i].session_id,
                           Serialize(sessions[i], format, params).ToString());
  });
  RunManifest manifest = NewManifest(g);
  manifest.AddInput(a.input);
  Emit(a.output, fmt::format("{}", fmt::join(lines, "")), out, manifest,
       a.manifest);
  return kOk;
}

struct SplitArgs {
  std::string mode = "cc-spans";
  int k = 2;
  std::string input;
  std::string output;
  std::string manifest;
};

int DoSplit(const SplitArgs& a, const Globals& g, std::ostream& out) {
  SplitMode mode;
  if (a.mode == "cc-spans") mode = SplitMode::CcSpans();
  else if (a.mode == "tsot-parity") mode = SplitMode::TsotParity(a.k);
  else throw ValidationError(fmt::format("unknown split mode '{}'", a.mode));
  std::string text;
  for (const auto& line : ReadTranscripts(a.input)) {
    const auto streams = SplitChannels(ParseTranscript(line.text), mode);
    for (size_t i = 0; i < streams.size(); ++i)
      text += fmt::format("{}\t{}\t{}\n", line.session_id, i,
                          fmt::join(streams[i], " "));
  }
  RunManifest manifest = NewManifest(g);
  manifest.AddInput(a.input);
  Emit(a.output, text, out, manifest, a.manifest);
  return kOk;
}

struct CssArgs {
  std::string input;
  std::string sources;
  double window = 2.4;
  double hop = 0.8;
  std::string separator = "oracle";
  std::vector<std::string> outputs;
  std::string features;
  std::string manifest;
};

std::map<std::string, Waveform> LoadSources(const fs::path& dir,
                                            const fs::path& mixture,
                                            int sample_rate,
                                            RunManifest& manifest) {
  if (!fs::is_directory(dir))
    throw ValidationError(fmt::format("{}: no such directory", dir.string()));
  const std::string mix_name = mixture.filename().string();
  std::string prefix;
  if (mix_name.ends_with(".mix.wav"))
    prefix = mix_name.substr(0, mix_name.size() - std::string("mix.wav").size());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".wav" || name == mix_name ||
        name.ends_with(".mix.wav") || !name.starts_with(prefix))
      continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, Waveform> sources;
  for (const auto& f : files) {
    WavData w = ReadWav(f);
    if (w.sample_rate != sample_rate)
      throw ValidationError(fmt::format("{}: sample rate {} != mixture rate {}",
                                        f.string(), w.sample_rate, sample_rate));
    manifest.AddInput(f);
    std::string speaker = f.stem().string().substr(prefix.size());
    sources[speaker] = std::move(w.samples);
  }
  if (sources.empty())
    throw ValidationError(
        fmt::format("{}: no source WAVs for {}", dir.string(), mix_name));
  return sources;
}

int DoCss(const CssArgs& a, const Globals& g, std::ostream& out,
          std::ostream& err) {
  RequireFile(a.input);
  RunManifest manifest = NewManifest(g);
  manifest.AddInput(a.input);
  const WavData mix = ReadWav(a.input);
  const ChunkPlan plan{a.window, a.hop};
  CheckPlan(plan);
  CssResult result;
  if (a.separator == "identity") {
    result = RunCss(mix.samples, mix.sample_rate, plan, IdentitySeparator{});
  } else if (a.separator == "oracle") {
    if (a.sources.empty())
      throw ValidationError("the oracle separator needs --sources");
    OracleSeparator sep(
        LoadSources(a.sources, a.input, mix.sample_rate, manifest));
    result = RunCss(mix.samples, mix.sample_rate, plan, sep);
  } else {
    throw ValidationError(fmt::format("unknown separator '{}'", a.separator));
  }
  for (size_t k = 0; k < 2; ++k) {
    WriteWav(a.outputs[k], result.streams[k], mix.sample_rate);
    manifest.AddOutput(a.outputs[k]);
  }
  if (!a.features.empty()) {
    for (size_t k = 0; k < 2; ++k) {
      const fs::path p = fmt::format("{}.ch{}.f32", a.features, k);
      WriteFeatures(p, LogMel(result.streams[k], mix.sample_rate));
      manifest.AddOutput(p);
    }
  }
  manifest.Write(a.manifest.empty() ? a.outputs[0] + ".manifest.json"
                                    : a.manifest);
  out << fmt::format("chunks={} swaps={} dropped_speakers={}\n", result.chunks,
                     result.swaps, result.dropped_speakers);
  if (result.dropped_speakers > 0)
    err << fmt::format(
        "warning: {} chunk-speaker activations beyond two were dropped\n",
        result.dropped_speakers);
  return kOk;
}

struct ScoreArgs {
  std::string hyp;
  std::string ref;
  bool per_condition = false;
  bool macro = false;
  bool lowercase = false;
  size_t beam = 0;
  std::string json_out;
  std::string manifest;
};

int DoScore(const ScoreArgs& a, const Globals& g, std::ostream& out) {
  const auto refs = ReadCorpus(a.ref);
  const auto hyps = ReadTranscripts(a.hyp);
  std::map<std::string, const TranscriptLine*> by_id;
  for (const auto& h : hyps)
    if (!by_id.emplace(h.session_id, &h).second)
      throw ValidationError(fmt::format("{}: duplicate hypothesis for '{}'",
                                        a.hyp, h.session_id));
  for (const auto& h : hyps)
    if (std::none_of(refs.begin(), refs.end(), [&](const Session& s) {
          return s.session_id == h.session_id;
        }))
      throw ValidationError(fmt::format("{}: session '{}' is not in {}", a.hyp,
                                        h.session_id, a.ref));
  SagwerOptions opts;
  opts.beam = a.beam;
  std::vector<Scored> scored(refs.size());
  ParallelFor(refs.size(), g.jobs, [&](size_t i) {
    const Session& s = refs[i];
    auto it = by_id.find(s.session_id);
    if (it == by_id.end())
      throw ValidationError(fmt::format("{}: no hypothesis for session '{}'",
                                        a.hyp, s.session_id));
    const WordStream hyp =
        Lower(ParseTranscript(it->second->text).Words(), a.lowercase);
    scored[i] = {s.session_id, ConditionOf(s),
                 Sagwer(hyp, ReferenceStreams(s, a.lowercase), opts)};
  });
  const ScoreSummary summary = Summarize(scored);
  out << ScoreTable(summary, a.per_condition, a.macro);
  if (!a.json_out.empty()) {
    RunManifest manifest = NewManifest(g);
    manifest.AddInput(a.hyp);
    manifest.AddInput(a.ref);
    std::ostringstream discard;
    Emit(a.json_out, ScoreJson(scored, summary).dump(2) + "\n", discard,
         manifest, a.manifest);
  }
  return kOk;
}

struct AuditArgs {
  std::string config;
  std::string against;
  std::optional<uint64_t> seed;
  std::string check = "swap";
  size_t frames = 32;
  size_t dim = 8;
  bool json = false;
};

std::string BreakdownText(const ArchConfig& c, const ParamBreakdown& p) {
  std::string out = fmt::format("config {}\n", c.name.empty() ? "(unnamed)" : c.name);
  for (const auto& [name, v] : p.terms)
    out += fmt::format("  {:<36} {:>14}\n", name, v);
  out += fmt::format("  {:<36} {:>14}\n", "block (one layer)", p.block);
  out += fmt::format("  {:<36} {:>14}\n", "encoder", p.encoder);
  out += fmt::format("  {:<36} {:>14}\n", "frontend", p.frontend);
  out += fmt::format("  {:<36} {:>14}\n", "decoder", p.decoder);
  out += fmt::format("  {:<36} {:>14}\n", "total", p.total);
  return out;
}

int DoAuditParams(const AuditArgs& a, std::ostream& out) {
  const ArchConfig c = LoadArchConfig(a.config);
  if (a.against.empty()) {
    out << BreakdownText(c, ParamCount(c));
    return kOk;
  }
  const ArchConfig b = LoadArchConfig(a.against);
  const ParityReport r = AssertParity(c, b);
  out << BreakdownText(c, r.a) << BreakdownText(b, r.b);
  out << fmt::format("parity: {} (encoder {}; difference {})\n",
                     r.equal ? "equal" : "NOT equal",
                     r.encoder_equal ? "equal" : "NOT equal", r.difference);
  return kOk;
}

std::string TapText(const char* name, const std::optional<TapLatency>& t) {
  if (!t) return fmt::format("{}: none (no causal layers)\n", name);
  if (t->full_context) return fmt::format("{}: full utterance context\n", name);
  return fmt::format(
      "{}: chunk {} frames = {:.3f} s; lookahead max {} frames = {:.3f} s, "
      "mean {:.2f} frames = {:.3f} s\n",
      name, t->chunk_frames, t->chunk_latency_s, t->max_lookahead_frames,
      t->max_lookahead_s, t->mean_lookahead_frames, t->mean_lookahead_s);
}

int DoAuditLatency(const AuditArgs& a, std::ostream& out) {
  const ArchConfig c = LoadArchConfig(a.config);
  const LatencyReport r = ComputeLatency(c);
  out << TapText("first_pass", r.first_pass)
      << TapText("second_pass", r.second_pass);
  return kOk;
}

std::vector<ToyTensor> ToyInputs(const ArchConfig& c, uint64_t seed,
                                 size_t frames, size_t dim) {
  CounterRng rng(seed, 0x70f);
  std::vector<ToyTensor> x(c.two_channel() ? 2 : 1, ToyTensor(frames, dim));
  for (auto& t : x)
    for (double& v : t.data) v = rng.Normal();
  return x;
}

int DoAuditToy(const AuditArgs& a, const Globals& g, std::ostream& out,
               std::ostream& err) {
  const ArchConfig c = LoadArchConfig(a.config);
  const uint64_t seed = PickSeed(a.seed, g);
  auto x = ToyInputs(c, seed, a.frames, a.dim);
  const ToyOutput base = ToyForward(c, x, seed);
  if (a.check == "swap") {
    if (!c.two_channel())
      throw ValidationError("swap check needs channel_dependent_layers > 0");
    const ToyOutput swapped = ToyForward(c, {x[1], x[0]}, seed);
    const bool ok = swapped.first_pass == base.first_pass &&
                    swapped.second_pass == base.second_pass;
    out << fmt::format("swap invariance: {}\n", ok ? "bit-exact" : "VIOLATED");
    return ok ? kOk : kValidation;
  }
  if (a.check == "causality") {
    size_t cases = 0, violations = 0;
    for (size_t k = 0; k < x.size(); ++k) {
      for (size_t p = 0; p < a.frames; ++p) {
        auto y = x;
        y[k].at(p, 0) += 1.0;
        const ToyOutput pert = ToyForward(c, y, seed);
        for (Tap tap : {Tap::kFirstPass, Tap::kSecondPass}) {
          if (tap == Tap::kFirstPass && c.causal_layers == 0) continue;
          const ToyTensor& b = tap == Tap::kFirstPass ? base.first_pass : base.second_pass;
          const ToyTensor& q = tap == Tap::kFirstPass ? pert.first_pass : pert.second_pass;
          ++cases;
          for (size_t t = 0; t < a.frames; ++t) {
            bool changed = false;
            for (size_t d = 0; d < a.dim; ++d) changed |= b.at(t, d) != q.at(t, d);
            if (changed && p > ComputeDependencyWindow(c, t, tap, a.frames).latest) {
              ++violations;
              err << fmt::format("violation: input frame {} changed output frame {}\n", p, t);
            }
          }
        }
      }
    }
    out << fmt::format("causality: {} perturbation cases, {} violations\n", cases,
                       violations);
    return violations == 0 ? kOk : kValidation;
  }
  throw ValidationError(fmt::format("unknown check '{}'", a.check));
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig {
  uint64_t seed = 1;
  std::string condition = "OV30";
  size_t sessions = 2;
  std::string pool;
  size_t pool_size = 24;
  size_t per_session = 0;
  int speakers = 2;
  double window = 2.4;
  double hop = 0.8;
  std::string format = "segsot";
  double alpha = 5.0;
  double beta = 0.5;
  std::string out;
};

PipelineConfig ParsePipelineConfig(const fs::path& path,
                                   const std::optional<uint64_t>& seed) {
  RequireFile(path);
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw sotkit::ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!j.is_object() || j.empty())
    throw ValidationError(fmt::format("{}: pipeline config is empty", path.string()));
  PipelineConfig c;
  if (seed) c.seed = *seed;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "seed") c.seed = v.get<uint64_t>();
      else if (key == "condition") c.condition = v.get<std::string>();
      else if (key == "sessions") c.sessions = v.get<size_t>();
      else if (key == "pool") c.pool = (path.parent_path() / v.get<std::string>()).string();
      else if (key == "pool_size") c.pool_size = v.get<size_t>();
      else if (key == "per_session") c.per_session = v.get<size_t>();
      else if (key == "speakers") c.speakers = v.get<int>();
      else if (key == "window") c.window = v.get<double>();
      else if (key == "hop") c.hop = v.get<double>();
      else if (key == "format") c.format = v.get<std::string>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "out") c.out = v.get<std::string>();
      else throw ValidationError(fmt::format("{}: unknown key '{}'", path.string(), key));
    } catch (const nlohmann::json::exception&) {
      throw sotkit::ParseError(
          fmt::format("{}: key '{}' has the wrong type", path.string(), key));
    }
  }
  if (c.out.empty())
    throw ValidationError(fmt::format("{}: 'out' is required", path.string()));
  return c;
}

int DoPipeline(const std::string& config_path, const Globals& g,
               std::ostream& out) {
  const PipelineConfig c = ParsePipelineConfig(config_path, g.seed);
  RunManifest manifest = NewManifest(g);
  manifest.AddInput(config_path);
  manifest.seeds["simulate"] = std::to_string(c.seed);

  SimulateRequest req;
  if (!c.pool.empty()) {
    req.pool = PoolFromCorpus(ReadCorpus(c.pool));
    manifest.AddInput(c.pool);
  } else {
    req.pool = SyntheticPool(c.seed, c.pool_size);
  }
  req.spec = MixtureSpec::ForCondition(ParseCondition(c.condition), c.seed);
  req.spec.num_speakers = c.speakers;
  req.sessions = c.sessions;
  req.per_session = c.per_session;
  CheckSpec(req.spec);
  const SotFormat format = ParseFormat(c.format);
  const SegmentationParams params = Params(c.alpha, c.beta);
  const ChunkPlan plan{c.window, c.hop};
  CheckPlan(plan);

  std::vector<Session> sessions = SimulateAll(req, g.jobs);
  manifest.stages.push_back(fmt::format("simulate condition={} sessions={}",
                                        c.condition, c.sessions));
  const fs::path dir = c.out;
  fs::create_directories(dir);

  std::vector<std::string> hyp_lines(sessions.size());
  std::vector<Scored> scored(sessions.size());
  std::vector<Scored> channel_scored(sessions.size());
  std::vector<StreamPair> streams(sessions.size());
  ParallelFor(sessions.size(), g.jobs, [&](size_t i) {
    const Session& s = sessions[i];
    const CssResult css = RunCss(*s.mixture, *s.sample_rate, plan,
                                 OracleSeparator::FromSession(s));
    const auto refs = ReferenceStreams(s, false);
    // Oracle SOT recognizer: what the streams carry, with speaker labels.
    const SerializedTranscript t = Serialize(
        AudibleTokens(s, css.streams, *s.sample_rate), format, params);
    hyp_lines[i] = fmt::format("{}\t{}\n", s.session_id, t.ToString());
    scored[i] = {s.session_id, ConditionOf(s), Sagwer(t.Words(), refs)};
    // Channels serialized as if each were one speaker. Speakers that change
    // channel across a silence break per-speaker order here.
    channel_scored[i] = {
        s.session_id, ConditionOf(s),
        Sagwer(Serialize(AttributeTokens(s, css.streams, *s.sample_rate),
                         format, params)
                   .Words(),
               refs)};
    streams[i] = css.streams;
  });
  manifest.stages.push_back(
      fmt::format("css separator=oracle window={} hop={}", c.window, c.hop));
  manifest.stages.push_back("oracle recognizer: audible reference tokens");
  manifest.stages.push_back(fmt::format("serialize format={} alpha={} beta={}",
                                        c.format, c.alpha, c.beta));
  manifest.stages.push_back("score sagwer");

  for (size_t i = 0; i < sessions.size(); ++i) {
    Session& s = sessions[i];
    WriteSessionAudio(s, dir);
    manifest.AddOutput(dir / *s.audio.mixture);
    for (const auto& [_, p] : s.audio.sources) manifest.AddOutput(dir / p);
    for (size_t k = 0; k < 2; ++k) {
      const fs::path p = dir / fmt::format("{}.ch{}.wav", s.session_id, k);
      WriteWav(p, streams[i][k], *s.sample_rate);
      manifest.AddOutput(p);
    }
  }
  SaveCorpus(sessions, dir / "sessions.jsonl");
  manifest.AddOutput(dir / "sessions.jsonl");
  WriteText(dir / "hyps.txt", fmt::format("{}", fmt::join(hyp_lines, "")));
  manifest.AddOutput(dir / "hyps.txt");
  const ScoreSummary summary = Summarize(scored);
  json report = ScoreJson(scored, summary);
  const ScoreSummary channel_summary = Summarize(channel_scored);
  report["channel_serialization"] =
      ScoreJson(channel_scored, channel_summary)["aggregate"];
  WriteText(dir / "report.json", report.dump(2) + "\n");
  manifest.AddOutput(dir / "report.json");
  manifest.Write(dir / "manifest.json");

  for (size_t i = 0; i < scored.size(); ++i) {
    const AlignmentResult& r = scored[i].result;
    out << fmt::format(
        "{}\tS={} D={} I={} ref_words={} wer={:.4f} channel_wer={:.4f}\n",
        scored[i].session_id, r.substitutions, r.deletions, r.insertions,
        r.ref_words, r.wer(), channel_scored[i].result.wer());
  }
  out << ScoreTable(summary, true, true);
  return kOk;
}

std::string JoinArgs(const std::vector<std::string>& args) {
  std::string s = "sotkit";
  for (const auto& a : args) s += " " + a;
  return s;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  Globals g;
  g.command_line = JoinArgs(args);
  CLI::App app{
      "Multi-talker transcript serialization, simulation, separation-harness, "
      "scoring and architecture-audit toolkit.\nAll durations are plain "
      "decimal seconds.",
      "sotkit"};
  app.set_version_flag("--version", fmt::format("sotkit {}", kVersion));
  app.add_option("--jobs", g.jobs, "Sessions processed in parallel")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Default seed for seeded subcommands");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate multi-speaker sessions");
  c_sim->add_option("--pool", sim.pool, "Utterance pool (JSON/JSONL sessions)");
  c_sim->add_option("--synthetic-pool", sim.synthetic_pool,
                    "Use N generated utterances instead of --pool");
  c_sim->add_option("--condition", sim.condition, "0L, 0S, OV10..OV40 or custom");
  c_sim->add_option("--overlap", sim.overlap, "Target overlap ratio (custom)");
  c_sim->add_option("--sessions", sim.sessions, "Sessions to generate");
  c_sim->add_option("--per-session", sim.per_session,
                    "Templates drawn per session (0 = whole pool)");
  c_sim->add_option("--speakers", sim.speakers, "Speakers per session");
  c_sim->add_option("--mix-probability", sim.mix_probability,
                    "Probability an event is an overlapped pair");
  c_sim->add_option("--seed", sim.seed, "Generator seed");
  c_sim->add_option("--sample-rate", sim.sample_rate, "Audio sample rate (Hz)");
  c_sim->add_flag("--no-audio", sim.no_audio, "Write timelines only");
  c_sim->add_option("--out", sim.out, "Output directory")->required();

  SerializeArgs ser;
  auto* c_ser = app.add_subcommand("serialize", "Serialize sessions to SOT text");
  c_ser->add_option("--format", ser.format, "ssot, tsot or segsot");
  c_ser->add_option("--alpha", ser.alpha, "Max speech span inside a segment (s)");
  c_ser->add_option("--beta", ser.beta, "Max pause inside a segment (s)");
  c_ser->add_option("--input", ser.input, "Sessions (JSON or JSONL)")->required();
  c_ser->add_option("--output", ser.output, "Output file (default stdout)");
  c_ser->add_option("--manifest", ser.manifest, "Manifest path");

  SplitArgs spl;
  auto* c_spl = app.add_subcommand("split", "Split serialized text into streams");
  c_spl->add_option("--mode", spl.mode, "cc-spans or tsot-parity");
  c_spl->add_option("--k", spl.k, "Virtual channels for tsot-parity");
  c_spl->add_option("--input", spl.input, "Transcript lines")->required();
  c_spl->add_option("--output", spl.output, "Output file (default stdout)");
  c_spl->add_option("--manifest", spl.manifest, "Manifest path");

  CssArgs css;
  auto* c_css = app.add_subcommand("css", "Windowed separation and stitching");
  c_css->add_option("--input", css.input, "Mixture WAV")->required();
  c_css->add_option("--sources", css.sources, "Directory of source WAVs");
  c_css->add_option("--window", css.window, "Window length (s)");
  c_css->add_option("--hop", css.hop, "Hop (s)");
  c_css->add_option("--separator", css.separator, "oracle or identity");
  c_css->add_option("--out", css.outputs, "Two output WAVs")
      ->required()
      ->expected(2);
  c_css->add_option("--features", css.features,
                    "Also dump 80-dim log-Mel frames to PREFIX.chK.f32");
  c_css->add_option("--manifest", css.manifest, "Manifest path");

  ScoreArgs sc;
  auto* c_sc = app.add_subcommand("score", "Speaker-agnostic WER");
  c_sc->add_option("--hyp", sc.hyp, "Hypothesis lines")->required();
  c_sc->add_option("--ref", sc.ref, "Reference sessions")->required();
  c_sc->add_flag("--per-condition", sc.per_condition, "Table per condition");
  c_sc->add_flag("--macro", sc.macro, "Macro average over conditions");
  c_sc->add_flag("--lowercase", sc.lowercase, "Lowercase hyp and ref");
  c_sc->add_option("--beam", sc.beam, "Beam width (0 = exact)");
  c_sc->add_option("--json", sc.json_out, "Write per-session JSON report");
  c_sc->add_option("--manifest", sc.manifest, "Manifest path");

  AuditArgs au;
  auto* c_au = app.add_subcommand("audit", "Architecture accounting");
  c_au->require_subcommand(1);
  auto* c_params = c_au->add_subcommand("params", "Parameter breakdown / parity");
  c_params->add_option("--config", au.config, "Arch config")->required();
  c_params->add_option("--against", au.against, "Second config for parity");
  auto* c_lat = c_au->add_subcommand("latency", "Per-tap latency");
  c_lat->add_option("--config", au.config, "Arch config")->required();
  auto* c_toy = c_au->add_subcommand("toyfwd", "Toy forward-pass checks");
  c_toy->add_option("--config", au.config, "Arch config")->required();
  c_toy->add_option("--seed", au.seed, "Weight and input seed");
  c_toy->add_option("--check", au.check, "swap or causality");
  c_toy->add_option("--frames", au.frames, "Input frames")
      ->check(CLI::Range(size_t{1}, kToyMaxFrames));
  c_toy->add_option("--dim", au.dim, "Feature dimension")
      ->check(CLI::Range(size_t{1}, kToyMaxDim));

  std::string pipeline_config;
  auto* c_pipe = app.add_subcommand("pipeline",
                                    "simulate -> css -> serialize -> score");
  c_pipe->add_option("--config", pipeline_config, "Pipeline JSON")->required();

  std::vector<const char*> argv{"sotkit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help / --version
      app.exit(e, out, err);
      return kOk;
    }
    const CLI::App* usage = &app;
    while (!usage->get_subcommands().empty())
      usage = usage->get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << usage->help();
    return kUsage;
  }

  try {
    if (*c_sim) return DoSimulate(sim, g, out);
    if (*c_ser) return DoSerialize(ser, g, out);
    if (*c_spl) return DoSplit(spl, g, out);
    if (*c_css) return DoCss(css, g, out, err);
    if (*c_sc) return DoScore(sc, g, out);
    if (*c_params) return DoAuditParams(au, out);
    if (*c_lat) return DoAuditLatency(au, out);
    if (*c_toy) return DoAuditToy(au, g, out, err);
    if (*c_pipe) return DoPipeline(pipeline_config, g, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  err << app.help();
  return kUsage;
}

}  // namespace sotkit::cli
