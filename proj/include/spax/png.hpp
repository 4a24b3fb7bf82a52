#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spax/dsp.hpp"

namespace spax {

// 8-bit grayscale PNG; pixels are row-major, width*height bytes.
void write_png_gray(const std::string& path, const std::vector<std::uint8_t>& pixels,
                    std::size_t width, std::size_t height);

// Log-magnitude rendering of a single-channel spectrogram (frequency on the
// vertical axis, low bins at the bottom; 80 dB display range).
void write_spectrogram_png(const std::string& path,
                           const ComplexSpectrogram& spec,
                           std::size_t channel = 0);

}  // namespace spax
