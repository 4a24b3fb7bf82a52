#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "spax/error.hpp"
#include "spax/estimator.hpp"
#include "spax/model.hpp"
#include "spax/rng.hpp"

using namespace spax;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.sample_rate = 8000;
  cfg.fft_size = 256;
  cfg.hop = 128;
  cfg.hidden = 8;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.query_dim = 16;
  cfg.bands = {16, 24, 40, 49};
  return cfg;
}

FoaWaveform random_wave(std::size_t channels, std::size_t len,
                        std::size_t rate, std::uint64_t seed) {
  FoaWaveform w(channels, len, rate);
  Rng rng(seed);
  for (auto& x : w.samples) x = rng.uniform(-0.5, 0.5);
  return w;
}

QueryEmbedding random_query(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  QueryEmbedding e;
  e.v = random_unit_vector(rng, d);
  return e;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("zero decoder input with zero bias emits zero") {
  Linear fc1, fc2;
  fc1.build("d.fc1", 4, 16);
  fc2.build("d.fc2", 16, 8);  // band width 2 -> 2Fn = 4, doubled for the gate
  Rng rng(1);
  for (auto& v : fc1.w.value.v) v = rng.gaussian();
  for (auto& v : fc2.w.value.v) v = rng.gaussian();
  const Tensor zn({3, 4});
  const Tensor out = decode_band(zn, fc1, fc2, nullptr);
  for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("one-bin decoder matches scalar arithmetic") {
  // Fn = 1 -> 2Fn = 2, D = 2, hidden 8
  Linear fc1, fc2;
  fc1.build("d.fc1", 2, 8);
  fc2.build("d.fc2", 8, 4);
  Rng rng(2);
  for (auto& v : fc1.w.value.v) v = rng.gaussian();
  for (auto& v : fc1.b.value.v) v = rng.gaussian();
  for (auto& v : fc2.w.value.v) v = rng.gaussian();
  for (auto& v : fc2.b.value.v) v = rng.gaussian();

  Tensor zn({1, 2});
  zn[0] = 0.3;
  zn[1] = -0.7;
  const Tensor out = decode_band(zn, fc1, fc2, nullptr);

  double h[8];
  for (std::size_t o = 0; o < 8; ++o) {
    double acc = fc1.b.value[o];
    for (std::size_t i = 0; i < 2; ++i)
      acc += fc1.w.value[o * 2 + i] * zn[i];
    h[o] = gelu(acc);
  }
  double pre[4];
  for (std::size_t o = 0; o < 4; ++o) {
    double acc = fc2.b.value[o];
    for (std::size_t i = 0; i < 8; ++i) acc += fc2.w.value[o * 8 + i] * h[i];
    pre[o] = acc;
  }
  CHECK(out[0] == doctest::Approx(pre[0] * sigmoid(pre[2])).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(pre[1] * sigmoid(pre[3])).epsilon(1e-12));
}

TEST_CASE("the value path is linear when gates are frozen") {
  Linear fc1, fc2;
  fc1.build("d.fc1", 3, 12);
  fc2.build("d.fc2", 12, 8);
  Rng rng(3);
  for (auto& v : fc1.w.value.v) v = rng.gaussian();
  // gate rows (second half) stay zero so every gate is sigmoid(0)
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t i = 0; i < 12; ++i)
      fc2.w.value[o * 12 + i] = rng.gaussian();

  Tensor zn({2, 3});
  for (auto& v : zn.v) v = rng.gaussian();
  const Tensor once = decode_band(zn, fc1, fc2, nullptr);
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t i = 0; i < 12; ++i) fc2.w.value[o * 12 + i] *= 2.0;
  const Tensor twice = decode_band(zn, fc1, fc2, nullptr);
  for (std::size_t i = 0; i < once.numel(); ++i)
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("assembly drops a lone band value at the right absolute bin") {
  const BandScheme scheme{{4, 5, 7, 6}};
  const auto offsets = scheme.offsets();
  std::vector<Tensor> bands;
  for (std::size_t n = 0; n < 4; ++n)
    bands.emplace_back(Tensor({2, 2 * scheme.widths[n]}));
  // row 1, band 3 (width 6 -> row stride 12), bin 2: real 0.9, imag -0.2
  bands[3][1 * 12 + 2] = 0.9;
  bands[3][1 * 12 + 6 + 2] = -0.2;
  const ComplexSpectrogram spec = assemble_spectrum(bands, scheme, 1, 2);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t f = 0; f < spec.bins; ++f) {
      const auto z = spec.at(0, t, f);
      if (t == 1 && f == offsets[3] + 2) {
        CHECK(z.real() == 0.9);
        CHECK(z.imag() == -0.2);
      } else {
        CHECK(z.real() == 0.0);
        CHECK(z.imag() == 0.0);
      }
    }
}

TEST_CASE("assembly validates band widths") {
  std::vector<Tensor> bands;
  bands.emplace_back(Tensor({2, 6}));
  CHECK_THROWS_AS(assemble_spectrum(bands, BandScheme{{4}}, 1, 2),
                  std::invalid_argument);
}

TEST_CASE("selector merge weights pick one channel") {
  ChannelMergeParams p;
  p.build("merge", 4, 1);
  // identity on channel 0's re/im
  p.layers[0].w.value[0 * 8 + 0] = 1.0;
  p.layers[0].w.value[1 * 8 + 1] = 1.0;

  ComplexSpectrogram multi(4, 3, 5);
  Rng rng(4);
  for (auto& z : multi.data) z = {rng.gaussian(), rng.gaussian()};
  const ComplexSpectrogram merged = channel_merge(multi, p, nullptr);
  REQUIRE(merged.channels == 1);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t f = 0; f < 5; ++f) {
      CHECK(merged.at(0, t, f).real() ==
            doctest::Approx(multi.at(0, t, f).real()).epsilon(1e-12));
      CHECK(merged.at(0, t, f).imag() ==
            doctest::Approx(multi.at(0, t, f).imag()).epsilon(1e-12));
    }
}

TEST_CASE("zero merge input broadcasts the bias") {
  ChannelMergeParams p;
  p.build("merge", 4, 1);
  p.layers[0].b.value[0] = 0.25;
  p.layers[0].b.value[1] = -0.5;
  ComplexSpectrogram multi(4, 2, 3);
  const ComplexSpectrogram merged = channel_merge(multi, p, nullptr);
  for (const auto& z : merged.data) {
    CHECK(z.real() == 0.25);
    CHECK(z.imag() == -0.5);
  }
}

TEST_CASE("two-channel merge matches a hand matrix product") {
  ChannelMergeParams p;
  p.build("merge", 2, 1);
  Rng rng(5);
  for (auto& v : p.layers[0].w.value.v) v = rng.gaussian();
  for (auto& v : p.layers[0].b.value.v) v = rng.gaussian();

  ComplexSpectrogram multi(2, 1, 1);
  multi.data[0] = {0.3, -0.1};
  multi.data[1] = {0.8, 0.4};
  const ComplexSpectrogram merged = channel_merge(multi, p, nullptr);
  const double x[4] = {0.3, -0.1, 0.8, 0.4};
  for (std::size_t o = 0; o < 2; ++o) {
    double acc = p.layers[0].b.value[o];
    for (std::size_t i = 0; i < 4; ++i) acc += p.layers[0].w.value[o * 4 + i] * x[i];
    const double got = o == 0 ? merged.data[0].real() : merged.data[0].imag();
    CHECK(got == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("two-layer merge matches its own forward math and gradient") {
  ChannelMergeParams p;
  p.build("merge", 4, 2);
  REQUIRE(p.layers.size() == 2);
  Rng rng(6);
  for (auto& layer : p.layers) {
    for (auto& v : layer.w.value.v) v = rng.gaussian() * 0.4;
    for (auto& v : layer.b.value.v) v = rng.gaussian() * 0.1;
  }
  ComplexSpectrogram multi(4, 2, 3);
  for (auto& z : multi.data) z = {rng.gaussian(), rng.gaussian()};

  MergeCache cache;
  const ComplexSpectrogram merged = channel_merge(multi, p, &cache);

  // scalar probe loss: sum of real parts; check input gradients by FD
  ComplexSpectrogram dmerged(1, 2, 3);
  for (auto& z : dmerged.data) z = {1.0, 0.0};
  ComplexSpectrogram dmulti;
  channel_merge_backward(p, cache, dmerged, dmulti);

  const double eps = 1e-6;
  for (std::size_t i = 0; i < multi.data.size(); i += 5) {
    auto loss_of = [&](const ComplexSpectrogram& m) {
      const ComplexSpectrogram out = channel_merge(m, p, nullptr);
      double acc = 0.0;
      for (const auto& z : out.data) acc += z.real();
      return acc;
    };
    ComplexSpectrogram up = multi, dn = multi;
    up.data[i] += std::complex<double>(eps, 0.0);
    dn.data[i] -= std::complex<double>(eps, 0.0);
    const double fd = (loss_of(up) - loss_of(dn)) / (2 * eps);
    CHECK(dmulti.data[i].real() == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("band-width conservation across configurations") {
  for (const std::size_t fft : {256u, 512u, 2048u}) {
    const BandScheme scheme = default_band_scheme(fft);
    std::size_t doubled = 0;
    for (auto w : scheme.widths) doubled += 2 * w;
    CHECK(doubled == 2 * (fft / 2 + 1));
  }
}

TEST_CASE("extraction from a zero mixture stays finite and biased") {
  Model model;
  model.build(tiny_config());
  model.init_weights(41);
  const FoaWaveform mix(4, 4000, 8000);  // silence
  const QueryEmbedding q = random_query(16, 42);

  PipelineCache cache;
  const std::vector<double> est = model_forward(model, mix, q, cache);
  for (double v : est) CHECK(std::isfinite(v));

  // direct spectral mapping, not masking: the estimate's magnitude exceeds
  // the (zero) mixture magnitude somewhere
  double peak = 0.0;
  for (const auto& z : cache.merged.data) peak = std::max(peak, std::abs(z));
  CHECK(peak > 0.0);
}

TEST_CASE("output length equals input length") {
  ModelConfig cfg = tiny_config();
  Model model;
  model.build(cfg);
  model.init_weights(43);
  const QueryEmbedding q = random_query(16, 44);
  for (const std::size_t len : {8000u, 32000u, 32001u}) {
    const FoaWaveform mix = random_wave(4, len, 8000, 45 + len);
    const FoaWaveform out = extract(mix, q, model);
    CHECK(out.channels == 1);
    CHECK(out.length() == len);
  }
}

TEST_CASE("extraction is deterministic") {
  Model model;
  model.build(tiny_config());
  model.init_weights(46);
  const FoaWaveform mix = random_wave(4, 4000, 8000, 47);
  const QueryEmbedding q = random_query(16, 48);
  const FoaWaveform a = extract(mix, q, model);
  const FoaWaveform b = extract(mix, q, model);
  CHECK(std::memcmp(a.samples.data(), b.samples.data(),
                    a.samples.size() * sizeof(double)) == 0);
}

TEST_CASE("mismatched query dimension names the problem") {
  Model model;
  model.build(tiny_config());
  model.init_weights(49);
  const FoaWaveform mix = random_wave(4, 2000, 8000, 50);
  const QueryEmbedding q = random_query(32, 51);  // model wants 16
  try {
    extract(mix, q, model);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& err) {
    const std::string msg = err.what();
    CHECK(msg.find("32") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
}

TEST_CASE("mismatched channel count and sample rate are rejected") {
  Model model;
  model.build(tiny_config());
  model.init_weights(52);
  const QueryEmbedding q = random_query(16, 53);
  CHECK_THROWS_AS(extract(random_wave(1, 2000, 8000, 54), q, model),
                  std::invalid_argument);
  CHECK_THROWS_AS(extract(random_wave(4, 2000, 16000, 55), q, model),
                  std::invalid_argument);
}

TEST_CASE("checkpoints round trip through the file format") {
  Model model;
  model.build(tiny_config());
  model.init_weights(56);
  const std::string path = temp_path("spax_test_ckpt.bin");
  save_checkpoint(model, path);
  Model back = load_checkpoint(path);

  CHECK(back.cfg.to_text() == model.cfg.to_text());
  const ParamList a = model.param_list();
  const ParamList b = back.param_list();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->path == b[i]->path);
    REQUIRE(a[i]->value.numel() == b[i]->value.numel());
    for (std::size_t j = 0; j < a[i]->value.numel(); ++j)
      CHECK(static_cast<float>(a[i]->value[j]) ==
            static_cast<float>(b[i]->value[j]));
  }

  // byte-stable: saving the loaded model reproduces the file exactly
  const std::string path2 = temp_path("spax_test_ckpt2.bin");
  save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string c1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string c2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(c1 == c2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Model model;
  model.build(tiny_config());
  model.init_weights(57);
  const std::string path = temp_path("spax_test_ckpt3.bin");
  save_checkpoint(model, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 9);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
