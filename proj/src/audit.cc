#include "sotkit/audit.h"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sotkit/rng.h"

namespace sotkit {

void CheckConfig(const ArchConfig& c) {
  auto fail = [&](std::string msg) {
    throw std::invalid_argument(
        c.name.empty() ? msg : fmt::format("{}: {}", c.name, msg));
  };
  if (c.total_layers <= 0) fail("total_layers must be positive");
  if (c.attention_dim <= 0 || c.heads <= 0 || c.ffn_dim <= 0 ||
      c.conv_kernel <= 0)
    fail("dimensions must be positive");
  if (c.attention_dim % c.heads != 0)
    fail(fmt::format("attention_dim {} is not divisible by heads {}",
                     c.attention_dim, c.heads));
  if (c.ffn_modules_per_block != 1 && c.ffn_modules_per_block != 2)
    fail("ffn_modules_per_block must be 1 or 2");
  if (c.channel_dependent_layers < 0 ||
      c.channel_dependent_layers > c.total_layers)
    fail("channel_dependent_layers must be in [0, total_layers]");
  if (c.causal_layers < 0 || c.noncausal_layers < 0 ||
      c.causal_layers + c.noncausal_layers != c.total_layers)
    fail(fmt::format("causal_layers {} + noncausal_layers {} != total_layers {}",
                     c.causal_layers, c.noncausal_layers, c.total_layers));
  if (!(c.frame_rate > 0.0)) fail("frame_rate must be positive");
  if (c.input_dim <= 0 || c.subsampling_layers < 0)
    fail("invalid front-end dimensions");
  if (c.decoder != ArchConfig::Decoder::kNone && c.vocab_size <= 0)
    fail("a decoder needs vocab_size > 0");
}

// ---------------------------------------------------------------------------
// Config files

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string_view DecoderName(ArchConfig::Decoder d) {
  switch (d) {
    case ArchConfig::Decoder::kNone: return "none";
    case ArchConfig::Decoder::kTransducer: return "transducer";
    case ArchConfig::Decoder::kAttention: return "attention";
  }
  return "?";
}

}  // namespace

ArchConfig ParseArchConfig(std::string_view text, std::string_view context) {
  ArchConfig c;
  size_t lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    const std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    const auto where = fmt::format("{}:{}", context, lineno);
    if (eq == std::string::npos)
      throw std::invalid_argument(
          fmt::format("{}: expected 'key = value'", where));
    const std::string key = Trim(std::string_view(trimmed).substr(0, eq));
    const std::string value = Trim(std::string_view(trimmed).substr(eq + 1));

    auto as_int = [&]() {
      size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty())
        throw std::invalid_argument(
            fmt::format("{}: {} expects an integer, got '{}'", where, key, value));
      return v;
    };
    auto as_double = [&]() {
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty())
        throw std::invalid_argument(
            fmt::format("{}: {} expects a number, got '{}'", where, key, value));
      return v;
    };
    auto as_bool = [&]() {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw std::invalid_argument(
          fmt::format("{}: {} expects true/false, got '{}'", where, key, value));
    };

    if (key == "name") c.name = value;
    else if (key == "total_layers") c.total_layers = as_int();
    else if (key == "channel_dependent_layers") c.channel_dependent_layers = as_int();
    else if (key == "share_branch_weights") c.share_branch_weights = as_bool();
    else if (key == "attention_dim") c.attention_dim = as_int();
    else if (key == "heads") c.heads = as_int();
    else if (key == "ffn_dim") c.ffn_dim = as_int();
    else if (key == "conv_kernel") c.conv_kernel = as_int();
    else if (key == "ffn_modules_per_block") c.ffn_modules_per_block = as_int();
    else if (key == "causal_layers") c.causal_layers = as_int();
    else if (key == "noncausal_layers") c.noncausal_layers = as_int();
    else if (key == "causal_chunk") c.causal_chunk_s = as_double();
    else if (key == "noncausal_chunk") c.noncausal_chunk_s = as_double();
    else if (key == "frame_rate") c.frame_rate = as_double();
    else if (key == "input_dim") c.input_dim = as_int();
    else if (key == "subsampling_layers") c.subsampling_layers = as_int();
    else if (key == "vocab_size") c.vocab_size = as_int();
    else if (key == "predictor_layers") c.predictor_layers = as_int();
    else if (key == "predictor_dim") c.predictor_dim = as_int();
    else if (key == "joint_dim") c.joint_dim = as_int();
    else if (key == "decoder_layers") c.decoder_layers = as_int();
    else if (key == "decoder_ffn_dim") c.decoder_ffn_dim = as_int();
    else if (key == "decoder") {
      if (value == "none") c.decoder = ArchConfig::Decoder::kNone;
      else if (value == "transducer") c.decoder = ArchConfig::Decoder::kTransducer;
      else if (value == "attention") c.decoder = ArchConfig::Decoder::kAttention;
      else
        throw std::invalid_argument(
            fmt::format("{}: unknown decoder '{}'", where, value));
    } else {
      throw std::invalid_argument(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
  CheckConfig(c);
  return c;
}

ArchConfig LoadArchConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return ParseArchConfig(text.str(), path.string());
}

std::string FormatArchConfig(const ArchConfig& c) {
  std::string out;
  auto put = [&](std::string_view k, auto v) {
    out += fmt::format("{} = {}\n", k, v);
  };
  if (!c.name.empty()) put("name", c.name);
  put("total_layers", c.total_layers);
  put("channel_dependent_layers", c.channel_dependent_layers);
  put("share_branch_weights", c.share_branch_weights ? "true" : "false");
  put("attention_dim", c.attention_dim);
  put("heads", c.heads);
  put("ffn_dim", c.ffn_dim);
  put("conv_kernel", c.conv_kernel);
  put("ffn_modules_per_block", c.ffn_modules_per_block);
  put("causal_layers", c.causal_layers);
  put("noncausal_layers", c.noncausal_layers);
  put("causal_chunk", c.causal_chunk_s);
  put("noncausal_chunk", c.noncausal_chunk_s);
  put("frame_rate", c.frame_rate);
  put("input_dim", c.input_dim);
  put("subsampling_layers", c.subsampling_layers);
  put("decoder", DecoderName(c.decoder));
  if (c.decoder != ArchConfig::Decoder::kNone) put("vocab_size", c.vocab_size);
  if (c.decoder == ArchConfig::Decoder::kTransducer) {
    put("predictor_layers", c.predictor_layers);
    put("predictor_dim", c.predictor_dim);
    put("joint_dim", c.joint_dim);
  }
  if (c.decoder == ArchConfig::Decoder::kAttention) {
    put("decoder_layers", c.decoder_layers);
    put("decoder_ffn_dim", c.decoder_ffn_dim);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter accounting

ParamBreakdown ParamCount(const ArchConfig& c) {
  CheckConfig(c);
  ParamBreakdown p;
  const int64_t d = c.attention_dim, f = c.ffn_dim, k = c.conv_kernel;
  const int64_t m = c.ffn_modules_per_block;
  auto term = [&](std::string name, int64_t v) {
    p.terms.emplace_back(std::move(name), v);
    return v;
  };

  const int64_t mhsa = 4 * (d * d + d);
  const int64_t ffn = m * (2 * d * f + d + f);
  const int64_t conv_in = 2 * d * d + 2 * d;
  const int64_t conv_dw = k * d + d;
  const int64_t conv_out = d * d + d;
  const int64_t norms = (m + 4) * 2 * d;
  p.block = mhsa + ffn + conv_in + conv_dw + conv_out + norms;

  const int64_t layers = c.total_layers;
  term("block.mhsa x layers", layers * mhsa);
  term("block.ffn x layers", layers * ffn);
  term("block.conv_pointwise_in x layers", layers * conv_in);
  term("block.conv_depthwise x layers", layers * conv_dw);
  term("block.conv_pointwise_out x layers", layers * conv_out);
  term("block.norms x layers", layers * norms);
  p.encoder = layers * p.block;
  if (c.two_channel() && !c.share_branch_weights) {
    p.encoder += term("encoder.unshared_branch_copy",
                      int64_t{c.channel_dependent_layers} * p.block);
  }

  // Each stride-2 3x3 conv: freq' = (freq - 3) / 2 + 1.
  int64_t freq = c.input_dim, in_ch = 1;
  for (int i = 0; i < c.subsampling_layers; ++i) {
    p.frontend +=
        term(fmt::format("frontend.conv{}", i + 1), 9 * in_ch * d + d);
    in_ch = d;
    freq = (freq - 3) / 2 + 1;
  }
  if (c.subsampling_layers > 0)
    p.frontend += term("frontend.linear", freq * d * d + d);
  else
    p.frontend += term("frontend.linear", int64_t{c.input_dim} * d + d);

  const int64_t v = c.vocab_size;
  if (c.decoder == ArchConfig::Decoder::kTransducer) {
    const int64_t pd = c.predictor_dim, j = c.joint_dim;
    p.decoder += term("predictor.embedding", v * pd);
    p.decoder += term("predictor.lstm",
                      int64_t{c.predictor_layers} * 4 * (2 * pd * pd + 2 * pd));
    p.decoder += term("joint.encoder_proj", d * j + j);
    p.decoder += term("joint.predictor_proj", pd * j + j);
    p.decoder += term("joint.output", j * v + v);
  } else if (c.decoder == ArchConfig::Decoder::kAttention) {
    const int64_t df = c.decoder_ffn_dim, nl = c.decoder_layers;
    p.decoder += term("decoder.embedding", v * d);
    p.decoder += term("decoder.self_attention x layers", nl * 4 * (d * d + d));
    p.decoder += term("decoder.cross_attention x layers", nl * 4 * (d * d + d));
    p.decoder += term("decoder.ffn x layers", nl * (2 * d * df + d + df));
    p.decoder += term("decoder.norms x layers", nl * 3 * 2 * d);
    p.decoder += term("decoder.final_norm", 2 * d);
    p.decoder += term("decoder.output", d * v + v);
  }

  p.total = p.encoder + p.frontend + p.decoder;
  return p;
}

ParityReport AssertParity(const ArchConfig& a, const ArchConfig& b) {
  ParityReport r;
  r.a = ParamCount(a);
  r.b = ParamCount(b);
  r.difference = r.a.total - r.b.total;
  r.equal = r.difference == 0;
  r.encoder_equal = r.a.encoder == r.b.encoder;
  return r;
}

// ---------------------------------------------------------------------------
// Chunk masks

namespace {

// 0 = full context.
size_t ChunkFrames(double chunk_s, double frame_rate) {
  if (chunk_s <= 0.0) return 0;
  return std::max<size_t>(1, static_cast<size_t>(std::llround(chunk_s * frame_rate)));
}

size_t LayerChunk(const ArchConfig& c, int layer /* 0-based */) {
  return layer < c.causal_layers ? ChunkFrames(c.causal_chunk_s, c.frame_rate)
                                 : ChunkFrames(c.noncausal_chunk_s, c.frame_rate);
}

size_t LayerLatest(size_t chunk, size_t t, size_t num_frames) {
  const size_t latest = chunk == 0 ? num_frames - 1 : (t / chunk + 1) * chunk - 1;
  return std::min(latest, num_frames - 1);
}

int TapLayers(const ArchConfig& c, Tap tap) {
  if (tap == Tap::kSecondPass) return c.total_layers;
  if (c.causal_layers == 0)
    throw std::invalid_argument("config has no causal layers (no first pass)");
  return c.causal_layers;
}

// Output frame t of the stack reads the top layer's window, whose frames read
// the next layer down, and so on: compose from the top layer downwards.
size_t StackLatest(const ArchConfig& c, int layers, size_t t,
                   size_t num_frames) {
  for (int l = layers - 1; l >= 0; --l)
    t = LayerLatest(LayerChunk(c, l), t, num_frames);
  return t;
}

TapLatency TapLatencyFor(const ArchConfig& c, int layers) {
  TapLatency out;
  size_t period = 1;
  for (int l = 0; l < layers; ++l) {
    const size_t chunk = LayerChunk(c, l);
    if (chunk == 0) {
      out.full_context = true;
      return out;
    }
    period = std::lcm(period, chunk);
    out.chunk_frames = std::max(out.chunk_frames, chunk);
  }
  size_t total = 0;
  for (size_t t = 0; t < period; ++t) {
    const size_t ahead = StackLatest(c, layers, t, SIZE_MAX / 2) - t;
    out.max_lookahead_frames = std::max(out.max_lookahead_frames, ahead);
    total += ahead;
  }
  out.mean_lookahead_frames = double(total) / double(period);
  out.chunk_latency_s = double(out.chunk_frames) / c.frame_rate;
  out.max_lookahead_s = double(out.max_lookahead_frames) / c.frame_rate;
  out.mean_lookahead_s = out.mean_lookahead_frames / c.frame_rate;
  return out;
}

}  // namespace

DependencyWindow ComputeDependencyWindow(const ArchConfig& config, size_t t,
                                         Tap tap, size_t num_frames) {
  CheckConfig(config);
  if (t >= num_frames) throw std::invalid_argument("frame beyond input");
  return {0, StackLatest(config, TapLayers(config, tap), t, num_frames)};
}

LatencyReport ComputeLatency(const ArchConfig& config) {
  CheckConfig(config);
  LatencyReport r;
  if (config.causal_layers > 0)
    r.first_pass = TapLatencyFor(config, config.causal_layers);
  r.second_pass = TapLatencyFor(config, config.total_layers);
  return r;
}

// ---------------------------------------------------------------------------
// Toy forward pass

namespace {

struct ToyLayer {
  std::vector<double> weight;  // dim x dim
  std::vector<double> bias;
};

ToyLayer MakeLayer(uint64_t seed, int layer, size_t dim) {
  CounterRng rng(seed, static_cast<uint64_t>(layer));
  ToyLayer w;
  const double scale = 1.0 / std::sqrt(double(dim));
  w.weight.resize(dim * dim);
  for (double& x : w.weight) x = rng.Uniform(-scale, scale);
  w.bias.resize(dim);
  for (double& x : w.bias) x = rng.Uniform(-0.1, 0.1);
  return w;
}

ToyTensor ApplyBlock(const ToyTensor& x, const ToyLayer& w, size_t chunk,
                     bool nonlinear) {
  ToyTensor out(x.frames, x.dim);
  std::vector<double> mixed(x.dim);
  for (size_t t = 0; t < x.frames; ++t) {
    const size_t latest = LayerLatest(chunk, t, x.frames);
    std::fill(mixed.begin(), mixed.end(), 0.0);
    for (size_t s = 0; s <= latest; ++s)
      for (size_t c = 0; c < x.dim; ++c) mixed[c] += x.at(s, c);
    for (double& v : mixed) v /= double(latest + 1);
    for (size_t r = 0; r < x.dim; ++r) {
      double z = nonlinear ? w.bias[r] : 0.0;
      for (size_t c = 0; c < x.dim; ++c) z += w.weight[r * x.dim + c] * mixed[c];
      out.at(t, r) = x.at(t, r) + (nonlinear ? std::tanh(z) : z);
    }
  }
  return out;
}

ToyTensor Add(const ToyTensor& a, const ToyTensor& b) {
  ToyTensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

}  // namespace

ToyOutput ToyForward(const ArchConfig& config,
                     const std::vector<ToyTensor>& inputs, uint64_t seed,
                     const ToyOptions& options) {
  CheckConfig(config);
  const size_t want = config.two_channel() ? 2 : 1;
  if (inputs.size() != want)
    throw std::invalid_argument(fmt::format(
        "config expects {} input(s) (channel_dependent_layers = {}), got {}",
        want, config.channel_dependent_layers, inputs.size()));
  for (const auto& x : inputs) {
    if (x.dim == 0 || x.frames == 0 || x.dim > kToyMaxDim ||
        x.frames > kToyMaxFrames || x.data.size() != x.frames * x.dim)
      throw std::invalid_argument(fmt::format(
          "toy tensors must be at most {}x{}", kToyMaxFrames, kToyMaxDim));
    if (x.frames != inputs.front().frames || x.dim != inputs.front().dim)
      throw std::invalid_argument("input shapes differ");
    for (double v : x.data)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite input");
  }

  const size_t dim = inputs.front().dim;
  const int split = config.channel_dependent_layers;
  std::vector<ToyTensor> branches = inputs;
  ToyTensor merged;
  ToyOutput out;
  for (int l = 0; l < config.total_layers; ++l) {
    const ToyLayer w = MakeLayer(seed, l, dim);
    const size_t chunk = LayerChunk(config, l);
    if (l < split) {
      for (auto& b : branches) b = ApplyBlock(b, w, chunk, options.nonlinear);
    } else {
      if (l == split) merged = split > 0 ? Add(branches[0], branches[1])
                                         : branches[0];
      merged = ApplyBlock(merged, w, chunk, options.nonlinear);
    }
    if (l + 1 == config.causal_layers) {
      out.first_pass =
          l < split ? Add(branches[0], branches[1]) : merged;
    }
  }
  out.second_pass = split == config.total_layers
                        ? Add(branches[0], branches[1])
                        : merged;
  return out;
}

}  // namespace sotkit
