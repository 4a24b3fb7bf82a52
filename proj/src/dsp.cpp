#include "spax/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spax {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kOlaFloor = 1e-10;  // window-square normalization floor

bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// Mirror an out-of-range index back into [0, len) without repeating edges.
std::size_t reflect_index(std::ptrdiff_t idx, std::size_t len) {
  if (len == 1) return 0;
  const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(len) - 2;
  std::ptrdiff_t j = idx % period;
  if (j < 0) j += period;
  if (j >= static_cast<std::ptrdiff_t>(len)) j = period - j;
  return static_cast<std::size_t>(j);
}

}  // namespace

void validate_foa(const FoaWaveform& wave) {
  if (wave.channels != 1 && wave.channels != 4)
    throw std::invalid_argument("waveform must have 1 or 4 channels, got " +
                                std::to_string(wave.channels));
  if (wave.length() == 0)
    throw std::invalid_argument("waveform must be non-empty");
  for (double x : wave.samples)
    if (!std::isfinite(x))
      throw std::invalid_argument("waveform contains non-finite samples");
}

std::vector<double> hann_window(std::size_t n) {
  if (n < 2) throw std::invalid_argument("hann window needs n >= 2");
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k)
    w[k] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) /
                                static_cast<double>(n));
  return w;
}

StftConfig make_stft_config(std::size_t fft_size, std::size_t hop) {
  StftConfig cfg;
  cfg.fft_size = fft_size;
  cfg.hop = hop;
  cfg.window = hann_window(fft_size);
  validate_stft_config(cfg);
  return cfg;
}

void validate_stft_config(const StftConfig& cfg) {
  if (!is_pow2(cfg.fft_size) || cfg.fft_size < 4)
    throw std::invalid_argument("fft_size must be a power of two >= 4");
  if (cfg.hop == 0 || cfg.hop > cfg.fft_size)
    throw std::invalid_argument("hop must satisfy 1 <= hop <= fft_size");
  if (cfg.window.size() != cfg.fft_size)
    throw std::invalid_argument("window length must equal fft_size");
}

std::size_t stft_frame_count(std::size_t length, const StftConfig& cfg) {
  // reflect pad of fft_size/2 on both ends: padded - fft == length
  return (length + cfg.hop - 1) / cfg.hop + 1;
}

FftPlan make_fft_plan(std::size_t n) {
  if (!is_pow2(n)) throw std::invalid_argument("fft size must be power of two");
  FftPlan plan;
  plan.n = n;
  plan.twiddle.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    plan.twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  plan.bitrev.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    plan.bitrev[i] = r;
  }
  return plan;
}

void fft_execute(const FftPlan& plan, std::complex<double>* a, bool inverse) {
  const std::size_t n = plan.n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = plan.bitrev[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t base = 0; base < n; base += len) {
      for (std::size_t j = 0; j < half; ++j) {
        std::complex<double> w = plan.twiddle[j * step];
        if (inverse) w = std::conj(w);
        const std::complex<double> u = a[base + j];
        const std::complex<double> t = w * a[base + j + half];
        a[base + j] = u + t;
        a[base + j + half] = u - t;
      }
    }
  }
  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) a[i] *= s;
  }
}

void rfft(const FftPlan& plan, const double* x, std::complex<double>* out) {
  std::vector<std::complex<double>> buf(plan.n);
  for (std::size_t i = 0; i < plan.n; ++i) buf[i] = {x[i], 0.0};
  fft_execute(plan, buf.data(), false);
  for (std::size_t k = 0; k <= plan.n / 2; ++k) out[k] = buf[k];
}

void irfft(const FftPlan& plan, const std::complex<double>* spectrum,
           double* out) {
  const std::size_t n = plan.n;
  std::vector<std::complex<double>> buf(n);
  buf[0] = {spectrum[0].real(), 0.0};
  buf[n / 2] = {spectrum[n / 2].real(), 0.0};
  for (std::size_t k = 1; k < n / 2; ++k) {
    buf[k] = spectrum[k];
    buf[n - k] = std::conj(spectrum[k]);
  }
  fft_execute(plan, buf.data(), true);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
}

ComplexSpectrogram stft(const FoaWaveform& wave, const StftConfig& cfg) {
  validate_stft_config(cfg);
  if (wave.channels == 0 || wave.length() == 0)
    throw std::invalid_argument("stft: empty waveform");
  const std::size_t n = cfg.fft_size;
  const std::size_t hop = cfg.hop;
  const std::size_t pad = n / 2;
  const std::size_t len = wave.length();
  const std::size_t frames = stft_frame_count(len, cfg);
  const std::size_t padded_len = (frames - 1) * hop + n;
  const std::size_t bins = n / 2 + 1;

  // reflect pad both ends, zero tail up to a whole number of frames
  std::vector<double> padded(wave.channels * padded_len, 0.0);
  for (std::size_t c = 0; c < wave.channels; ++c) {
    const double* src = wave.channel(c);
    double* dst = padded.data() + c * padded_len;
    const std::size_t filled = std::min(padded_len, len + 2 * pad);
    for (std::size_t i = 0; i < filled; ++i)
      dst[i] = src[reflect_index(static_cast<std::ptrdiff_t>(i) -
                                     static_cast<std::ptrdiff_t>(pad),
                                 len)];
  }

  ComplexSpectrogram spec(wave.channels, frames, bins);
  spec.frame_hop = hop;
  spec.fft_size = n;
  spec.sample_rate = wave.sample_rate;

  const FftPlan plan = make_fft_plan(n);
  const std::ptrdiff_t total =
      static_cast<std::ptrdiff_t>(wave.channels * frames);
#pragma omp parallel for
  for (std::ptrdiff_t ct = 0; ct < total; ++ct) {
    const std::size_t c = static_cast<std::size_t>(ct) / frames;
    const std::size_t t = static_cast<std::size_t>(ct) % frames;
    const double* seg = padded.data() + c * padded_len + t * hop;
    std::vector<double> frame(n);
    for (std::size_t i = 0; i < n; ++i) frame[i] = seg[i] * cfg.window[i];
    rfft(plan, frame.data(), &spec.at(c, t, 0));
  }
  return spec;
}

FoaWaveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
                  std::size_t out_len) {
  validate_stft_config(cfg);
  if (spec.fft_size != cfg.fft_size || spec.frame_hop != cfg.hop)
    throw std::invalid_argument(
        "istft: config does not match the analysis fft_size/hop");
  if (spec.bins != cfg.fft_size / 2 + 1)
    throw std::invalid_argument("istft: bin count does not match fft_size");
  const std::size_t n = cfg.fft_size;
  const std::size_t hop = cfg.hop;
  const std::size_t pad = n / 2;
  const std::size_t frames = spec.frames;
  const std::size_t total_len = (frames - 1) * hop + n;
  if (out_len + pad > total_len)
    throw std::invalid_argument("istft: out_len exceeds reconstructible length");

  std::vector<double> wsum(total_len, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < n; ++i)
      wsum[t * hop + i] += cfg.window[i] * cfg.window[i];

  FoaWaveform out(spec.channels, out_len, spec.sample_rate);
  const FftPlan plan = make_fft_plan(n);
  const std::ptrdiff_t chans = static_cast<std::ptrdiff_t>(spec.channels);
#pragma omp parallel for
  for (std::ptrdiff_t c = 0; c < chans; ++c) {
    std::vector<double> acc(total_len, 0.0);
    std::vector<double> frame(n);
    for (std::size_t t = 0; t < frames; ++t) {
      irfft(plan, &spec.at(static_cast<std::size_t>(c), t, 0), frame.data());
      double* dst = acc.data() + t * hop;
      for (std::size_t i = 0; i < n; ++i) dst[i] += frame[i] * cfg.window[i];
    }
    double* dst = out.channel(static_cast<std::size_t>(c));
    for (std::size_t j = 0; j < out_len; ++j)
      dst[j] = acc[pad + j] / std::max(wsum[pad + j], kOlaFloor);
  }
  return out;
}

ComplexSpectrogram istft_adjoint(const FoaWaveform& grad_wave,
                                 const StftConfig& cfg, std::size_t frames) {
  validate_stft_config(cfg);
  const std::size_t n = cfg.fft_size;
  const std::size_t hop = cfg.hop;
  const std::size_t pad = n / 2;
  const std::size_t out_len = grad_wave.length();
  const std::size_t total_len = (frames - 1) * hop + n;
  if (out_len + pad > total_len)
    throw std::invalid_argument("istft_adjoint: waveform longer than frames");
  const std::size_t bins = n / 2 + 1;

  std::vector<double> wsum(total_len, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < n; ++i)
      wsum[t * hop + i] += cfg.window[i] * cfg.window[i];

  // embed grad at the pad offset, undo the per-sample normalization
  std::vector<double> g(grad_wave.channels * total_len, 0.0);
  for (std::size_t c = 0; c < grad_wave.channels; ++c) {
    const double* src = grad_wave.channel(c);
    double* dst = g.data() + c * total_len;
    for (std::size_t j = 0; j < out_len; ++j)
      dst[pad + j] = src[j] / std::max(wsum[pad + j], kOlaFloor);
  }

  ComplexSpectrogram dspec(grad_wave.channels, frames, bins);
  dspec.frame_hop = hop;
  dspec.fft_size = n;
  dspec.sample_rate = grad_wave.sample_rate;

  const FftPlan plan = make_fft_plan(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::ptrdiff_t total =
      static_cast<std::ptrdiff_t>(grad_wave.channels * frames);
#pragma omp parallel for
  for (std::ptrdiff_t ct = 0; ct < total; ++ct) {
    const std::size_t c = static_cast<std::size_t>(ct) / frames;
    const std::size_t t = static_cast<std::size_t>(ct) % frames;
    const double* seg = g.data() + c * total_len + t * hop;
    std::vector<double> frame(n);
    for (std::size_t i = 0; i < n; ++i) frame[i] = seg[i] * cfg.window[i];
    std::vector<std::complex<double>> sp(bins);
    rfft(plan, frame.data(), sp.data());
    std::complex<double>* row = &dspec.at(c, t, 0);
    row[0] = {sp[0].real() * inv_n, 0.0};
    row[bins - 1] = {sp[bins - 1].real() * inv_n, 0.0};
    for (std::size_t k = 1; k + 1 < bins; ++k) row[k] = sp[k] * (2.0 * inv_n);
  }
  return dspec;
}

}  // namespace spax
