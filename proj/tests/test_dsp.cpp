#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "spax/dsp.hpp"
#include "spax/rng.hpp"

using namespace spax;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

FoaWaveform random_wave(std::size_t channels, std::size_t len,
                        std::size_t rate, std::uint64_t seed) {
  FoaWaveform w(channels, len, rate);
  Rng rng(seed);
  for (auto& x : w.samples) x = rng.uniform(-1.0, 1.0);
  return w;
}

double rel_l2(const FoaWaveform& a, const FoaWaveform& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = a.samples[i] - b.samples[i];
    num += d * d;
    den += b.samples[i] * b.samples[i];
  }
  return std::sqrt(num / den);
}

// O(n^2) windowed DFT, the independent oracle for stft
std::vector<std::complex<double>> naive_frame_dft(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -kTwoPi * static_cast<double>(j * k) / static_cast<double>(n);
      acc += frame[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("hann window closed-form points") {
  const auto w4 = hann_window(4);
  CHECK(w4[0] == doctest::Approx(0.0));
  CHECK(w4[1] == doctest::Approx(0.5));
  CHECK(w4[2] == doctest::Approx(1.0));
  CHECK(w4[3] == doctest::Approx(0.5));

  const auto w2 = hann_window(2);
  CHECK(w2[0] == doctest::Approx(0.0));
  CHECK(w2[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(hann_window(1), std::invalid_argument);
}

TEST_CASE("hann window satisfies overlap-add at half hop") {
  const auto w = hann_window(8);
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(w[k] + w[k + 4] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stft of zero input is zero") {
  FoaWaveform w(4, 1000, 8000);
  const auto spec = stft(w, make_stft_config(256, 128));
  for (const auto& z : spec.data) {
    CHECK(z.real() == 0.0);
    CHECK(z.imag() == 0.0);
  }
}

TEST_CASE("stft frame count follows the padding rule") {
  const auto cfg = make_stft_config(256, 128);
  CHECK(stft_frame_count(8000, cfg) == 64);
  CHECK(stft_frame_count(896, cfg) == 8);
  CHECK(stft_frame_count(1, cfg) == 2);
}

TEST_CASE("stft is linear in its input") {
  const auto cfg = make_stft_config(64, 32);
  const FoaWaveform x = random_wave(1, 300, 8000, 11);
  const FoaWaveform y = random_wave(1, 300, 8000, 12);
  const double a = -2.5, b = 0.75;
  FoaWaveform combo = x;
  for (std::size_t i = 0; i < combo.samples.size(); ++i)
    combo.samples[i] = a * x.samples[i] + b * y.samples[i];
  const auto sx = stft(x, cfg);
  const auto sy = stft(y, cfg);
  const auto sc = stft(combo, cfg);
  for (std::size_t i = 0; i < sc.data.size(); ++i)
    CHECK(std::abs(sc.data[i] - (a * sx.data[i] + b * sy.data[i])) < 1e-10);
}

TEST_CASE("stft matches the naive windowed DFT") {
  const auto cfg = make_stft_config(16, 8);
  const FoaWaveform x = random_wave(1, 40, 8000, 5);
  const auto spec = stft(x, cfg);

  // rebuild the padded signal exactly as the analysis does
  const std::size_t pad = 8;
  std::vector<double> padded((spec.frames - 1) * cfg.hop + cfg.fft_size, 0.0);
  for (std::size_t i = 0; i < x.length() + 2 * pad && i < padded.size(); ++i) {
    std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(i) - 8;
    const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(x.length()) - 2;
    std::ptrdiff_t j = idx % period;
    if (j < 0) j += period;
    if (j >= static_cast<std::ptrdiff_t>(x.length())) j = period - j;
    padded[i] = x.channel(0)[j];
  }
  for (std::size_t t = 0; t < spec.frames; ++t) {
    std::vector<double> frame(cfg.fft_size);
    for (std::size_t i = 0; i < cfg.fft_size; ++i)
      frame[i] = padded[t * cfg.hop + i] * cfg.window[i];
    const auto oracle = naive_frame_dft(frame);
    for (std::size_t k = 0; k < oracle.size(); ++k)
      CHECK(std::abs(spec.at(0, t, k) - oracle[k]) < 1e-10);
  }
}

TEST_CASE("bin-centered sinusoid concentrates in its bin") {
  const std::size_t n = 256;
  const auto cfg = make_stft_config(n, n / 2);
  const std::size_t bin = 24;
  FoaWaveform x(1, 4096, 8000);
  for (std::size_t i = 0; i < x.length(); ++i)
    x.channel(0)[i] =
        std::sin(kTwoPi * static_cast<double>(bin * i) / static_cast<double>(n));
  const auto spec = stft(x, cfg);
  // interior frames see a pure windowed sinusoid: the target bin dominates
  for (std::size_t t = 4; t + 4 < spec.frames; ++t) {
    double best = 0.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double mag = std::abs(spec.at(0, t, k));
      if (mag > best) {
        best = mag;
        best_k = k;
      }
    }
    CHECK(best_k == bin);
  }
}

TEST_CASE("zeroing one channel zeroes exactly that spectrogram channel") {
  const auto cfg = make_stft_config(128, 64);
  FoaWaveform x = random_wave(4, 2000, 8000, 77);
  std::fill(x.channel(2), x.channel(2) + x.length(), 0.0);
  const auto spec = stft(x, cfg);
  for (std::size_t c = 0; c < 4; ++c) {
    double energy = 0.0;
    for (std::size_t t = 0; t < spec.frames; ++t)
      for (std::size_t k = 0; k < spec.bins; ++k)
        energy += std::norm(spec.at(c, t, k));
    if (c == 2)
      CHECK(energy == 0.0);
    else
      CHECK(energy > 0.0);
  }
}

TEST_CASE("istft round trip on random 4x32000") {
  const auto cfg = make_stft_config(256, 128);
  const FoaWaveform x = random_wave(4, 32000, 32000, 3);
  const FoaWaveform back = istft(stft(x, cfg), cfg, x.length());
  double peak = 0.0, err = 0.0;
  for (std::size_t i = 0; i < x.samples.size(); ++i) {
    peak = std::max(peak, std::abs(x.samples[i]));
    err = std::max(err, std::abs(x.samples[i] - back.samples[i]));
  }
  CHECK(err < 1e-6 * peak);
}

TEST_CASE("istft round trip on a one-second chirp") {
  const auto cfg = make_stft_config(256, 128);
  FoaWaveform x(1, 8000, 8000);
  for (std::size_t i = 0; i < x.length(); ++i) {
    const double t = static_cast<double>(i) / 8000.0;
    x.channel(0)[i] = 0.8 * std::sin(kTwoPi * (200.0 * t + 1500.0 * t * t));
  }
  const FoaWaveform back = istft(stft(x, cfg), cfg, x.length());
  CHECK(rel_l2(back, x) < 1e-6);
}

TEST_CASE("istft of a zero spectrogram is zero") {
  ComplexSpectrogram spec(1, 10, 129);
  spec.frame_hop = 128;
  spec.fft_size = 256;
  spec.sample_rate = 8000;
  const auto out = istft(spec, make_stft_config(256, 128), 900);
  for (double v : out.samples) CHECK(v == 0.0);
}

TEST_CASE("istft rejects a mismatched analysis config") {
  const auto cfg = make_stft_config(256, 128);
  const FoaWaveform x = random_wave(1, 1000, 8000, 9);
  auto spec = stft(x, cfg);
  CHECK_THROWS_AS(istft(spec, make_stft_config(512, 256), 1000),
                  std::invalid_argument);
  CHECK_THROWS_AS(istft(spec, make_stft_config(256, 64), 1000),
                  std::invalid_argument);
}

TEST_CASE("istft_adjoint is the adjoint of istft") {
  const auto cfg = make_stft_config(64, 32);
  const std::size_t frames = 12, bins = 33, out_len = 300;
  Rng rng(123);

  ComplexSpectrogram spec(2, frames, bins);
  spec.frame_hop = cfg.hop;
  spec.fft_size = cfg.fft_size;
  spec.sample_rate = 8000;
  for (auto& z : spec.data) z = {rng.gaussian(), rng.gaussian()};

  FoaWaveform y(2, out_len, 8000);
  for (auto& v : y.samples) v = rng.gaussian();

  const FoaWaveform ax = istft(spec, cfg, out_len);
  double lhs = 0.0;
  for (std::size_t i = 0; i < ax.samples.size(); ++i)
    lhs += ax.samples[i] * y.samples[i];

  const ComplexSpectrogram aty = istft_adjoint(y, cfg, frames);
  double rhs = 0.0;
  for (std::size_t i = 0; i < spec.data.size(); ++i)
    rhs += spec.data[i].real() * aty.data[i].real() +
           spec.data[i].imag() * aty.data[i].imag();

  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("waveform validation enforces the FOA channel contract") {
  CHECK_THROWS_AS(validate_foa(FoaWaveform(2, 100, 8000)),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_foa(FoaWaveform(0, 0, 8000)),
                  std::invalid_argument);
  FoaWaveform bad(1, 4, 8000);
  bad.samples[2] = std::nan("");
  CHECK_THROWS_AS(validate_foa(bad), std::invalid_argument);
  CHECK_NOTHROW(validate_foa(FoaWaveform(4, 100, 8000)));
}
