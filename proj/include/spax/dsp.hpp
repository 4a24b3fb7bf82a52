#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace spax {

// Multichannel time-domain signal, channel-major (C x L).
struct FoaWaveform {
  std::size_t channels = 0;
  std::size_t sample_rate = 0;
  std::vector<double> samples;

  FoaWaveform() = default;
  FoaWaveform(std::size_t c, std::size_t len, std::size_t rate)
      : channels(c), sample_rate(rate), samples(c * len, 0.0) {}

  std::size_t length() const {
    return channels ? samples.size() / channels : 0;
  }
  double* channel(std::size_t c) { return samples.data() + c * length(); }
  const double* channel(std::size_t c) const {
    return samples.data() + c * length();
  }
};

// Throws invalid_argument unless channels ∈ {1,4}, length > 0, all finite.
void validate_foa(const FoaWaveform& wave);

// Complex time-frequency grid, C x T x F.
struct ComplexSpectrogram {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t frame_hop = 0;
  std::size_t fft_size = 0;
  std::size_t sample_rate = 0;
  std::vector<std::complex<double>> data;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t c, std::size_t t, std::size_t f)
      : channels(c), frames(t), bins(f), data(c * t * f) {}

  std::complex<double>& at(std::size_t c, std::size_t t, std::size_t f) {
    return data[(c * frames + t) * bins + f];
  }
  const std::complex<double>& at(std::size_t c, std::size_t t,
                                 std::size_t f) const {
    return data[(c * frames + t) * bins + f];
  }
};

struct StftConfig {
  std::size_t fft_size = 0;
  std::size_t hop = 0;
  std::vector<double> window;
};

// Periodic Hann window w[k] = 0.5 - 0.5*cos(2*pi*k/n).
std::vector<double> hann_window(std::size_t n);

// Hann analysis pair; fft_size must be a power of two >= 4, hop <= fft_size.
StftConfig make_stft_config(std::size_t fft_size, std::size_t hop);

void validate_stft_config(const StftConfig& cfg);

// Frame count for a signal of `length` samples under the reflect-pad rule
// (fft_size/2 pad on both ends): ceil(length/hop) + 1.
std::size_t stft_frame_count(std::size_t length, const StftConfig& cfg);

ComplexSpectrogram stft(const FoaWaveform& wave, const StftConfig& cfg);

// Weighted overlap-add inverse with window-square normalization.
// out_len must not exceed (frames-1)*hop + fft_size/2.
FoaWaveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
                  std::size_t out_len);

// Adjoint of the istft linear map: gradients w.r.t. the waveform become
// gradients w.r.t. the spectrogram bins. Shapes follow grad_wave (C x
// out_len) and the analysis geometry (frames, fft_size/2+1 bins).
ComplexSpectrogram istft_adjoint(const FoaWaveform& grad_wave,
                                 const StftConfig& cfg, std::size_t frames);

// Power-of-two complex FFT plan (twiddles + bit-reversal table).
struct FftPlan {
  std::size_t n = 0;
  std::vector<std::complex<double>> twiddle;  // exp(-2*pi*i*k/n), k < n/2
  std::vector<std::size_t> bitrev;
};

FftPlan make_fft_plan(std::size_t n);
void fft_execute(const FftPlan& plan, std::complex<double>* a, bool inverse);

// Real transforms built on the complex plan of the same size.
void rfft(const FftPlan& plan, const double* x, std::complex<double>* out);
// spectrum has n/2+1 bins; imaginary parts of DC and Nyquist are ignored.
void irfft(const FftPlan& plan, const std::complex<double>* spectrum,
           double* out);

}  // namespace spax
