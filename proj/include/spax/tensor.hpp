#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace spax {

// Dense row-major grid of doubles. Just storage plus a shape; indexing
// arithmetic stays explicit at the call sites.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0);
  }
  Tensor(std::initializer_list<std::size_t> s)
      : Tensor(std::vector<std::size_t>(s)) {}

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::size_t numel() const { return v.size(); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(0.0); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace spax
