#include "spax/nn.hpp"

#include <stdexcept>

#include "spax/kernels.hpp"

namespace spax {

void Linear::build(const std::string& prefix, std::size_t in_dim,
                   std::size_t out_dim) {
  in = in_dim;
  out = out_dim;
  w.build(prefix + ".weight", {out_dim, in_dim});
  b.build(prefix + ".bias", {out_dim});
}

void Linear::forward(const double* x, double* y, std::size_t batch) const {
  kernels::linear_forward(x, w.value.data(), b.value.data(), y, batch, in,
                          out);
}

void Linear::backward(const double* x, const double* dy, double* dx,
                      std::size_t batch) {
  kernels::linear_backward_params(dy, x, w.grad.data(), b.grad.data(), batch,
                                  in, out);
  if (dx)
    kernels::linear_backward_input(dy, w.value.data(), dx, batch, in, out);
}

void RmsNorm::build(const std::string& prefix, std::size_t d) {
  dim = d;
  gain.build(prefix + ".gain", {d});
  gain.value.fill(1.0);
}

void RmsNorm::forward(const double* x, double* y, double* inv_rms,
                      std::size_t batch) const {
  kernels::rmsnorm_forward(x, gain.value.data(), y, inv_rms, batch, dim, eps);
}

void RmsNorm::backward(const double* x, const double* inv_rms,
                       const double* dy, double* dx, std::size_t batch) {
  kernels::rmsnorm_backward(x, gain.value.data(), inv_rms, dy, dx,
                            gain.grad.data(), batch, dim);
}

void init_normal(Param& p, Rng& rng, double stddev) {
  for (auto& x : p.value.v) x = rng.gaussian() * stddev;
}

}  // namespace spax
