#include "spax/bandsplit.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spax/kernels.hpp"

namespace spax {

std::size_t BandScheme::total_bins() const {
  std::size_t n = 0;
  for (auto w : widths) n += w;
  return n;
}

std::vector<std::size_t> BandScheme::offsets() const {
  std::vector<std::size_t> off(widths.size());
  std::size_t acc = 0;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    off[i] = acc;
    acc += widths[i];
  }
  return off;
}

BandScheme default_band_scheme(std::size_t fft_size) {
  static const std::size_t base_widths[] = {6,  6,  6,  6,  6,   6,   6,
                                            6,  6,  6,  6,  32,  32,  32,
                                            32, 32, 32, 64, 64,  64,  64,
                                            128, 128, 128, 127};
  constexpr std::size_t kBaseBins = 1025;
  constexpr std::size_t kBands = 25;
  const std::size_t bins = fft_size / 2 + 1;

  BandScheme scheme;
  scheme.widths.resize(kBands);
  if (bins == kBaseBins) {
    for (std::size_t i = 0; i < kBands; ++i) scheme.widths[i] = base_widths[i];
    return scheme;
  }
  // Scale proportionally, keep every band at least one bin wide, absorb the
  // rounding remainder into the last band.
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < kBands; ++i) {
    const std::size_t scaled =
        static_cast<std::size_t>(static_cast<double>(base_widths[i]) *
                                 static_cast<double>(bins) / kBaseBins);
    scheme.widths[i] = scaled < 1 ? 1 : scaled;
    used += scheme.widths[i];
  }
  if (used + 1 > bins)
    throw std::invalid_argument(
        "fft_size too small for the band scheme: " + std::to_string(fft_size));
  scheme.widths[kBands - 1] = bins - used;
  return scheme;
}

void validate_scheme(const BandScheme& scheme, std::size_t bins) {
  if (scheme.widths.empty())
    throw std::invalid_argument("band scheme has no bands");
  for (auto w : scheme.widths)
    if (w == 0) throw std::invalid_argument("band widths must be >= 1");
  if (scheme.total_bins() != bins)
    throw std::invalid_argument(
        "band scheme covers " + std::to_string(scheme.total_bins()) +
        " bins but the spectrogram has " + std::to_string(bins));
}

std::vector<Tensor> split_bands(const ComplexSpectrogram& spec,
                                const BandScheme& scheme) {
  validate_scheme(scheme, spec.bins);
  const std::size_t rows = spec.channels * spec.frames;
  const auto offsets = scheme.offsets();
  std::vector<Tensor> bands;
  bands.reserve(scheme.bands());
  for (std::size_t n = 0; n < scheme.bands(); ++n) {
    const std::size_t fn = scheme.widths[n];
    Tensor band({rows, 2 * fn});
    for (std::size_t r = 0; r < rows; ++r) {
      const std::complex<double>* src = spec.data.data() + r * spec.bins;
      double* dst = band.data() + r * 2 * fn;
      for (std::size_t j = 0; j < fn; ++j) {
        dst[j] = src[offsets[n] + j].real();
        dst[fn + j] = src[offsets[n] + j].imag();
      }
    }
    bands.push_back(std::move(band));
  }
  return bands;
}

void rms_norm(std::span<const double> x, std::span<const double> gain,
              double eps, std::span<double> y) {
  if (x.size() != gain.size() || x.size() != y.size() || x.empty())
    throw std::invalid_argument("rms_norm: length mismatch");
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double u = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * x[i] * u;
}

void BandEncoderParams::build(const std::string& prefix,
                              const BandScheme& scheme, std::size_t d_model) {
  norm.resize(scheme.bands());
  proj.resize(scheme.bands());
  for (std::size_t n = 0; n < scheme.bands(); ++n) {
    const std::string base = prefix + ".band" + std::to_string(n);
    norm[n].build(base + ".norm", 2 * scheme.widths[n]);
    proj[n].build(base + ".proj", 2 * scheme.widths[n], d_model);
  }
}

void BandEncoderParams::collect(ParamList& into) {
  for (std::size_t n = 0; n < norm.size(); ++n) {
    norm[n].collect(into);
    proj[n].collect(into);
  }
}

Tensor encode_bands(const std::vector<Tensor>& bands,
                    const BandEncoderParams& params, std::size_t channels,
                    std::size_t frames, BandEncoderCache* cache) {
  const std::size_t n_bands = bands.size();
  if (params.proj.size() != n_bands)
    throw std::invalid_argument("encode_bands: band count mismatch");
  const std::size_t rows = channels * frames;
  const std::size_t d_model = n_bands ? params.proj[0].out : 0;
  Tensor z({channels, frames, n_bands, d_model});

  if (cache) {
    cache->input.resize(n_bands);
    cache->normed.resize(n_bands);
    cache->inv_rms.resize(n_bands);
  }
  Tensor normed, inv, projected;
  for (std::size_t n = 0; n < n_bands; ++n) {
    const Tensor& band = bands[n];
    if (band.shape.size() != 2 || band.shape[0] != rows ||
        band.shape[1] != params.norm[n].dim)
      throw std::invalid_argument("encode_bands: band " + std::to_string(n) +
                                  " shape mismatch");
    normed = Tensor({rows, band.shape[1]});
    inv = Tensor({rows});
    projected = Tensor({rows, d_model});
    params.norm[n].forward(band.data(), normed.data(), inv.data(), rows);
    params.proj[n].forward(normed.data(), projected.data(), rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double* dst = z.data() + (r * n_bands + n) * d_model;
      const double* src = projected.data() + r * d_model;
      for (std::size_t d = 0; d < d_model; ++d) dst[d] = src[d];
    }
    if (cache) {
      cache->input[n] = band;
      cache->normed[n] = std::move(normed);
      cache->inv_rms[n] = std::move(inv);
    }
  }
  return z;
}

void encode_bands_backward(BandEncoderParams& params,
                           const BandEncoderCache& cache, const Tensor& dz,
                           std::size_t channels, std::size_t frames) {
  const std::size_t n_bands = params.proj.size();
  const std::size_t rows = channels * frames;
  const std::size_t d_model = n_bands ? params.proj[0].out : 0;
  Tensor dproj({rows, d_model});
  for (std::size_t n = 0; n < n_bands; ++n) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = dz.data() + (r * n_bands + n) * d_model;
      double* dst = dproj.data() + r * d_model;
      for (std::size_t d = 0; d < d_model; ++d) dst[d] = src[d];
    }
    const std::size_t width = params.norm[n].dim;
    Tensor dnormed({rows, width});
    params.proj[n].backward(cache.normed[n].data(), dproj.data(),
                            dnormed.data(), rows);
    Tensor dband({rows, width});  // not propagated further; fills dgain
    params.norm[n].backward(cache.input[n].data(), cache.inv_rms[n].data(),
                            dnormed.data(), dband.data(), rows);
  }
}

}  // namespace spax
