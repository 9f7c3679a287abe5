#include "sotkit/features.h"

#include <fftw3.h>
#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "sotkit/core.h"

namespace sotkit {

static_assert(std::endian::native == std::endian::little,
              "feature dumps assume a little-endian host");

double HzToMel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

std::vector<double> MelEdgesHz(const LogMelOptions& opts) {
  const double high = opts.high_hz > 0 ? opts.high_hz : opts.sample_rate / 2.0;
  const double lo = HzToMel(opts.low_hz), hi = HzToMel(high);
  std::vector<double> edges(opts.num_bins + 2);
  for (int i = 0; i < opts.num_bins + 2; ++i)
    edges[i] = MelToHz(lo + (hi - lo) * i / (opts.num_bins + 1));
  return edges;
}

namespace {

// FFTW's planner is not thread-safe; execution with a private plan is.
std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(PlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(PlannerMutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Power spectrum, n/2 + 1 bins.
  void Power(std::vector<double>& out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k)
      out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

FeatureMatrix LogMel(std::span<const float> waveform, int sample_rate,
                     const LogMelOptions& opts) {
  if (sample_rate != 16000 || opts.sample_rate != 16000)
    throw std::invalid_argument(
        fmt::format("unsupported sample rate {} (16000 only)", sample_rate));
  const auto window = static_cast<size_t>(std::lround(opts.window_s * sample_rate));
  const auto hop = static_cast<size_t>(std::lround(opts.hop_s * sample_rate));
  if (window > static_cast<size_t>(opts.fft_size))
    throw std::invalid_argument("fft_size smaller than the analysis window");

  FeatureMatrix out;
  out.dim = static_cast<size_t>(opts.num_bins);
  if (waveform.size() < window) return out;
  out.frames = (waveform.size() - window) / hop + 1;
  out.data.resize(out.frames * out.dim);

  std::vector<double> hamming(window);
  for (size_t i = 0; i < window; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * double(i) /
                                        double(window - 1));

  // Filter weights per FFT bin, computed once.
  const std::vector<double> edges = MelEdgesHz(opts);
  const int bins = opts.fft_size / 2 + 1;
  std::vector<std::vector<double>> weights(opts.num_bins,
                                           std::vector<double>(bins, 0.0));
  for (int m = 0; m < opts.num_bins; ++m) {
    const double l = HzToMel(edges[m]), c = HzToMel(edges[m + 1]),
                 r = HzToMel(edges[m + 2]);
    for (int k = 0; k < bins; ++k) {
      const double mel = HzToMel(double(k) * sample_rate / opts.fft_size);
      if (mel > l && mel < r)
        weights[m][k] = mel <= c ? (mel - l) / (c - l) : (r - mel) / (r - c);
    }
  }

  RealFft fft(opts.fft_size);
  std::vector<double> power;
  const double log_floor = std::log(opts.energy_floor);
  for (size_t f = 0; f < out.frames; ++f) {
    double* in = fft.input();
    const float* frame = waveform.data() + f * hop;
    for (size_t i = 0; i < window; ++i) in[i] = frame[i] * hamming[i];
    for (int i = static_cast<int>(window); i < opts.fft_size; ++i) in[i] = 0.0;
    fft.Power(power);
    for (int m = 0; m < opts.num_bins; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += weights[m][k] * power[k];
      out.data[f * out.dim + m] = static_cast<float>(
          e > opts.energy_floor ? std::log(e) : log_floor);
    }
  }
  return out;
}

void WriteFeatures(const std::filesystem::path& path, const FeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error(
        fmt::format("{}: cannot open for writing", path.string()));
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
}

FeatureMatrix ReadFeatures(const std::filesystem::path& path, size_t dim) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ParseError(fmt::format("{}: cannot open", path.string()));
  const auto bytes = static_cast<size_t>(in.tellg());
  if (dim == 0 || bytes % (dim * sizeof(float)) != 0)
    throw ParseError(fmt::format("{}: size {} is not a multiple of {} floats",
                                 path.string(), bytes, dim));
  FeatureMatrix m;
  m.dim = dim;
  m.frames = bytes / (dim * sizeof(float));
  m.data.resize(m.frames * dim);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(bytes));
  return m;
}

}  // namespace sotkit
