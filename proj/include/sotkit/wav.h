#pragma once

#include <filesystem>

#include "sotkit/core.h"

namespace sotkit {

struct WavData {
  int sample_rate = 16000;
  Waveform samples;  // mono, full scale [-1, 1)
};

// Mono 16-bit PCM RIFF/WAVE only. Throws ParseError on anything else.
WavData ReadWav(const std::filesystem::path& path);

// Samples are clamped to [-1, 1] and rounded to the nearest 16-bit level.
void WriteWav(const std::filesystem::path& path, const Waveform& samples,
              int sample_rate);

// What a waveform looks like after a WriteWav/ReadWav round trip.
Waveform Quantize16(const Waveform& samples);

}  // namespace sotkit
