// Timing comparison between the OpenMP kernels and the serial reference.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spax/dsp.hpp"
#include "spax/kernels.hpp"
#include "spax/rng.hpp"

using namespace spax;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %.2fx\n",
              name.c_str(), serial_ms, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (no OpenMP)\n");
#endif
  Rng rng(42);

  {
    const std::size_t B = 4096, in = 256, out = 256;
    std::vector<double> x(B * in), w(out * in), b(out), y(B * out);
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : w) v = rng.gaussian() * 0.05;
    const double s = time_ms(
        [&] {
          kernels::ref::linear_forward(x.data(), w.data(), b.data(), y.data(),
                                       B, in, out);
        },
        3);
    const double p = time_ms(
        [&] {
          kernels::linear_forward(x.data(), w.data(), b.data(), y.data(), B,
                                  in, out);
        },
        3);
    report("linear_forward 4096x256x256", s, p);
  }

  {
    const std::size_t B = 4096, in = 256, out = 256;
    std::vector<double> x(B * in), dy(B * out), dw(out * in), db(out);
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : dy) v = rng.gaussian();
    const double s = time_ms(
        [&] {
          kernels::ref::linear_backward_params(dy.data(), x.data(), dw.data(),
                                               db.data(), B, in, out);
        },
        3);
    const double p = time_ms(
        [&] {
          kernels::linear_backward_params(dy.data(), x.data(), dw.data(),
                                          db.data(), B, in, out);
        },
        3);
    report("linear_backward_params", s, p);
  }

  {
    const std::size_t B = 32, S = 128, H = 4, hd = 64;
    const std::size_t width = H * hd;
    std::vector<double> q(B * S * width), k(q.size()), v(q.size()),
        probs(B * H * S * S), out(q.size());
    for (auto& x : q) x = rng.gaussian();
    for (auto& x : k) x = rng.gaussian();
    for (auto& x : v) x = rng.gaussian();
    const double s = time_ms(
        [&] {
          kernels::ref::attention_forward(q.data(), k.data(), v.data(),
                                          probs.data(), out.data(), B, S, H,
                                          hd);
        },
        3);
    const double p = time_ms(
        [&] {
          kernels::attention_forward(q.data(), k.data(), v.data(),
                                     probs.data(), out.data(), B, S, H, hd);
        },
        3);
    report("attention_forward 32x128x4x64", s, p);
  }

  {
    const std::size_t B = 65536, D = 128;
    std::vector<double> x(B * D), gain(D, 1.0), y(B * D), inv(B);
    for (auto& v : x) v = rng.gaussian();
    const double s = time_ms(
        [&] {
          kernels::ref::rmsnorm_forward(x.data(), gain.data(), y.data(),
                                        inv.data(), B, D, 1e-8);
        },
        3);
    const double p = time_ms(
        [&] {
          kernels::rmsnorm_forward(x.data(), gain.data(), y.data(), inv.data(),
                                   B, D, 1e-8);
        },
        3);
    report("rmsnorm_forward 65536x128", s, p);
  }

  {
    FoaWaveform wave(4, 32000, 32000);
    for (auto& v : wave.samples) v = rng.uniform(-0.5, 0.5);
    const StftConfig cfg = make_stft_config(2048, 1024);
    // the stft/istft pair parallelizes over channel x frame internally
    const double p = time_ms(
        [&] {
          const ComplexSpectrogram spec = stft(wave, cfg);
          const FoaWaveform back = istft(spec, cfg, wave.length());
          (void)back;
        },
        3);
    std::printf("%-28s round trip %9.3f ms (4ch x 1s @ 32kHz, 2048/1024)\n",
                "stft+istft", p);
  }
  return 0;
}
