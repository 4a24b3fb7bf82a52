#pragma once

#include <string>

#include "spax/dsp.hpp"

namespace spax {

enum class WavFormat { pcm16, float32 };

// RIFF/WAVE reader for PCM 16-bit and IEEE float 32-bit, 1..4 channels,
// 8000..48000 Hz. Samples are scaled to [-1, 1] doubles.
FoaWaveform read_wav(const std::string& path);

void write_wav(const std::string& path, const FoaWaveform& wave,
               WavFormat format = WavFormat::pcm16);

}  // namespace spax
