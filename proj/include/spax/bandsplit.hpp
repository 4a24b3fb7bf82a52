#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spax/dsp.hpp"
#include "spax/nn.hpp"
#include "spax/tensor.hpp"

namespace spax {

// Contiguous, non-overlapping frequency partition in ascending order.
struct BandScheme {
  std::vector<std::size_t> widths;

  std::size_t bands() const { return widths.size(); }
  std::size_t total_bins() const;
  // prefix sums: offsets()[n] is band n's first absolute bin
  std::vector<std::size_t> offsets() const;
};

// The 2048-point scheme: 11 bands of 6 bins, 6 of 32, 4 of 64, then
// 128/128/128/127 — 25 bands covering 1025 bins. Other power-of-two sizes
// scale each width by F/1025 (floor 1) and give the remainder to the last
// band.
BandScheme default_band_scheme(std::size_t fft_size);

void validate_scheme(const BandScheme& scheme, std::size_t bins);

// Band n of the complex grid becomes a real (C*T, 2*Fn) grid: the band's
// real parts followed by its imaginary parts.
std::vector<Tensor> split_bands(const ComplexSpectrogram& spec,
                                const BandScheme& scheme);

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps)
void rms_norm(std::span<const double> x, std::span<const double> gain,
              double eps, std::span<double> y);

struct BandEncoderParams {
  std::vector<RmsNorm> norm;  // one per band, width 2*Fn
  std::vector<Linear> proj;   // 2*Fn -> D

  void build(const std::string& prefix, const BandScheme& scheme,
             std::size_t d_model);
  void collect(ParamList& into);
};

struct BandEncoderCache {
  std::vector<Tensor> input;    // per band (C*T, 2Fn)
  std::vector<Tensor> normed;   // per band (C*T, 2Fn)
  std::vector<Tensor> inv_rms;  // per band (C*T)
};

// Per (channel, frame, band): linear(rms_norm(band slice)); stacked along the
// band axis into (C, T, N, D).
Tensor encode_bands(const std::vector<Tensor>& bands,
                    const BandEncoderParams& params, std::size_t channels,
                    std::size_t frames, BandEncoderCache* cache);

void encode_bands_backward(BandEncoderParams& params,
                           const BandEncoderCache& cache, const Tensor& dz,
                           std::size_t channels, std::size_t frames);

}  // namespace spax
