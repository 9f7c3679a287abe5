#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace sotkit {

struct LogMelOptions {
  int sample_rate = 16000;
  double window_s = 0.025;
  double hop_s = 0.010;
  int num_bins = 80;
  int fft_size = 512;
  double low_hz = 20.0;
  double high_hz = 0.0;  // <= 0 means Nyquist
  double energy_floor = 1e-10;
};

// Frames x num_bins, row-major.
struct FeatureMatrix {
  size_t frames = 0;
  size_t dim = 0;
  std::vector<float> data;

  std::span<const float> Row(size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

// HTK-style Mel scale.
double HzToMel(double hz);
double MelToHz(double mel);

// Triangular Mel filterbank; filter m rises from edge[m] to edge[m+1] and
// falls to edge[m+2] (edges in Hz, num_bins + 2 of them).
std::vector<double> MelEdgesHz(const LogMelOptions& opts);

// floor((num_samples - window) / hop) + 1 frames (0 when shorter than one
// window). Hamming window, power spectrum, Mel energies floored at
// energy_floor before the natural log. Throws std::invalid_argument for any
// sample rate other than 16 kHz.
FeatureMatrix LogMel(std::span<const float> waveform, int sample_rate,
                     const LogMelOptions& opts = {});

// Little-endian float32, frames x dim, no header.
void WriteFeatures(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix ReadFeatures(const std::filesystem::path& path, size_t dim);

}  // namespace sotkit
