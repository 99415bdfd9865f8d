#pragma once

#include <cstddef>
#include <vector>

#include "mole/mole.hpp"

namespace mole::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix a(r, c);
  for (double& v : a.data()) v = rng.uniform(lo, hi);
  return a;
}

inline RowVector random_row(std::size_t len, SeededRng& rng, double lo = 0.0, double hi = 1.0) {
  RowVector v(len);
  for (double& x : v.data()) x = rng.uniform(lo, hi);
  return v;
}

inline ImageTensor random_image(std::size_t alpha, std::size_t m, SeededRng& rng) {
  ImageTensor img(alpha, m);
  for (double& v : img.data()) v = rng.uniform01();
  return img;
}

inline KernelSet random_kernels(std::size_t alpha, std::size_t beta, std::size_t p, SeededRng& rng) {
  KernelSet k(alpha, beta, p);
  for (double& v : k.weights()) v = rng.uniform(-1.0, 1.0);
  return k;
}

/// Naive triple loop, the reference for every faster product.
inline Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double relative_max_diff(std::span<const double> a, std::span<const double> b) {
  const double s = max_abs(b);
  return max_abs_diff(a, b) / (s > 0.0 ? s : 1.0);
}

}  // namespace mole::test
