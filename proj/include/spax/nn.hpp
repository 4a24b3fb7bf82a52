#pragma once

#include <string>
#include <vector>

#include "spax/rng.hpp"
#include "spax/tensor.hpp"

namespace spax {

// Named learnable tensor; grad always mirrors value's shape. Paths address
// parameters in checkpoints, the optimizer state, and gradient checking.
struct Param {
  std::string path;
  Tensor value;
  Tensor grad;

  void build(std::string p, std::vector<std::size_t> shape) {
    path = std::move(p);
    value = Tensor(shape);
    grad = Tensor(std::move(shape));
  }
};

using ParamList = std::vector<Param*>;

struct Linear {
  Param w;  // (out, in)
  Param b;  // (out)
  std::size_t in = 0;
  std::size_t out = 0;

  void build(const std::string& prefix, std::size_t in_dim,
             std::size_t out_dim);
  void forward(const double* x, double* y, std::size_t batch) const;
  // dx may be null when the input gradient is not needed
  void backward(const double* x, const double* dy, double* dx,
                std::size_t batch);
  void collect(ParamList& into) {
    into.push_back(&w);
    into.push_back(&b);
  }
};

struct RmsNorm {
  Param gain;  // (dim)
  std::size_t dim = 0;
  double eps = 1e-8;

  void build(const std::string& prefix, std::size_t d);
  void forward(const double* x, double* y, double* inv_rms,
               std::size_t batch) const;
  void backward(const double* x, const double* inv_rms, const double* dy,
                double* dx, std::size_t batch);
  void collect(ParamList& into) { into.push_back(&gain); }
};

void init_normal(Param& p, Rng& rng, double stddev);

}  // namespace spax
