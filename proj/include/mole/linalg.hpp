#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mole/error.hpp"
#include "mole/rng.hpp"

namespace mole {

namespace detail {

inline void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw Error(Errc::DomainError, std::string(what) + " has a non-finite entry");
}

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw Error(Errc::InvalidGeometry, "matrix dimensions must be positive");
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw Error(Errc::InvalidGeometry, "matrix dimensions must be positive");
    if (data_.size() != rows * cols)
      throw Error(Errc::DimensionMismatch, "data length " + std::to_string(data_.size()) + " for shape " +
                                               detail::shape_str(rows, cols));
    detail::require_finite(data_, "matrix");
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    if (rows_ == 0 || cols_ == 0) throw Error(Errc::InvalidGeometry, "matrix dimensions must be positive");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error(Errc::DimensionMismatch, "ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    detail::require_finite(data_, "matrix");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A 1×len row vector; the carrier for unrolled data and features.
class RowVector {
 public:
  RowVector() = default;
  explicit RowVector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  explicit RowVector(std::vector<double> data) : data_(std::move(data)) {
    detail::require_finite(data_, "row vector");
  }
  RowVector(std::initializer_list<double> xs) : data_(xs) {}

  std::size_t size() const noexcept { return data_.size(); }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool operator==(const RowVector&) const = default;

 private:
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// products

/// Standard product. Each output element accumulates over k in increasing
/// order, so results are bit-reproducible run to run.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw Error(Errc::DimensionMismatch, "matmul " + detail::shape_str(a.rows(), a.cols()) + " by " +
                                             detail::shape_str(b.rows(), b.cols()));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

/// y = x · a, accumulated in row order.
inline RowVector row_times(std::span<const double> x, const Matrix& a) {
  if (x.size() != a.rows())
    throw Error(Errc::DimensionMismatch, "row vector of length " + std::to_string(x.size()) + " times " +
                                             detail::shape_str(a.rows(), a.cols()));
  RowVector y(a.cols());
  auto out = y.data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    const auto arow = a.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xk * arow[j];
  }
  return y;
}

inline RowVector row_times(const RowVector& x, const Matrix& a) { return row_times(x.data(), a); }

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// ---------------------------------------------------------------------------
// norms and comparisons

inline double max_abs(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "max_abs_diff length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(Errc::DimensionMismatch, "max_abs_diff shape mismatch");
  return max_abs_diff(a.data(), b.data());
}

inline double l2_norm(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x * x;
  return std::sqrt(s);
}

inline double frobenius_norm(const Matrix& a) { return l2_norm(a.data()); }

/// Maximum absolute column sum.
inline double norm1(const Matrix& a) {
  std::vector<double> sums(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) sums[j] += std::abs(r[j]);
  }
  return *std::max_element(sums.begin(), sums.end());
}

// ---------------------------------------------------------------------------
// LU with partial pivoting

/// PA = LU, stored compactly (unit lower L below the diagonal, U on and above).
class LuDecomposition {
 public:
  /// Pivots whose magnitude falls below `pivot_tol` times the largest
  /// entry of their original row are treated as zero.
  explicit LuDecomposition(const Matrix& a, double pivot_tol = 1e-12) : lu_(a), perm_(a.rows()) {
    if (a.rows() != a.cols())
      throw Error(Errc::DimensionMismatch, "LU needs a square matrix, got " + detail::shape_str(a.rows(), a.cols()));
    const std::size_t n = a.rows();
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    std::vector<double> scale(n);
    for (std::size_t i = 0; i < n; ++i) scale[i] = max_abs(a.row(i));

    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      double best = std::abs(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double v = std::abs(lu_(i, k));
        if (v > best) {
          best = v;
          piv = i;
        }
      }
      if (best == 0.0 || best < pivot_tol * scale[perm_[piv]])
        throw Error(Errc::SingularMatrix, "pivot " + std::to_string(k) + " is numerically zero");
      if (piv != k) {
        std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(piv).begin());
        std::swap(perm_[k], perm_[piv]);
      }
      const double inv_pivot = 1.0 / lu_(k, k);
      const auto urow = lu_.row(k);
      for (std::size_t i = k + 1; i < n; ++i) {
        auto r = lu_.row(i);
        const double l = r[k] * inv_pivot;
        r[k] = l;
        if (l == 0.0) continue;
        for (std::size_t j = k + 1; j < n; ++j) r[j] -= l * urow[j];
      }
    }
  }

  std::size_t order() const noexcept { return lu_.rows(); }
  const Matrix& packed() const noexcept { return lu_; }
  const std::vector<std::size_t>& permutation() const noexcept { return perm_; }

  /// Solves A x = b.
  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = order();
    if (b.size() != n) throw Error(Errc::DimensionMismatch, "solve rhs length mismatch");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = lu_.row(i);
      double s = x[i];
      for (std::size_t k = 0; k < i; ++k) s -= r[k] * x[k];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      const auto r = lu_.row(i);
      double s = x[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= r[k] * x[k];
      x[i] = s / r[i];
    }
    return x;
  }

  /// Solves A^T x = b.
  std::vector<double> solve_transposed(std::span<const double> b) const {
    const std::size_t n = order();
    if (b.size() != n) throw Error(Errc::DimensionMismatch, "solve rhs length mismatch");
    // A^T = U^T L^T P, so solve U^T z = b, L^T w = z, x = P^T w.
    std::vector<double> z(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      z[i] /= lu_(i, i);
      const double zi = z[i];
      const auto r = lu_.row(i);
      for (std::size_t k = i + 1; k < n; ++k) z[k] -= r[k] * zi;
    }
    for (std::size_t i = n; i-- > 0;) {
      const double zi = z[i];
      const auto r = lu_.row(i);
      for (std::size_t k = 0; k < i; ++k) z[k] -= r[k] * zi;
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = z[i];
    return x;
  }

  /// Solves A X = B for a full right-hand side, operating on whole rows.
  Matrix solve(const Matrix& b) const {
    const std::size_t n = order();
    if (b.rows() != n) throw Error(Errc::DimensionMismatch, "solve rhs row count mismatch");
    Matrix x(n, b.cols());
    for (std::size_t i = 0; i < n; ++i) std::ranges::copy(b.row(perm_[i]), x.row(i).begin());
    for (std::size_t i = 0; i < n; ++i) {
      auto xi = x.row(i);
      const auto r = lu_.row(i);
      for (std::size_t k = 0; k < i; ++k) {
        const double l = r[k];
        if (l == 0.0) continue;
        const auto xk = x.row(k);
        for (std::size_t j = 0; j < xi.size(); ++j) xi[j] -= l * xk[j];
      }
    }
    for (std::size_t i = n; i-- > 0;) {
      auto xi = x.row(i);
      const auto r = lu_.row(i);
      for (std::size_t k = i + 1; k < n; ++k) {
        const double u = r[k];
        if (u == 0.0) continue;
        const auto xk = x.row(k);
        for (std::size_t j = 0; j < xi.size(); ++j) xi[j] -= u * xk[j];
      }
      const double inv = 1.0 / r[i];
      for (double& v : xi) v *= inv;
    }
    return x;
  }

  Matrix inverse() const { return solve(Matrix::identity(order())); }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
};

inline Matrix invert(const Matrix& a) { return LuDecomposition(a).inverse(); }

/// Estimate of ||A^-1||_1 from an existing factorisation (Hager's method
/// with Higham's alternating-sign safeguard, as in LAPACK xLACON).
inline double inverse_norm1_estimate(const LuDecomposition& lu) {
  const std::size_t n = lu.order();
  std::vector<double> x(n, 1.0 / static_cast<double>(n));
  double est = 0.0;
  std::size_t last_j = n;
  for (int iter = 0; iter < 5; ++iter) {
    const auto y = lu.solve(x);
    double y1 = 0.0;
    for (double v : y) y1 += std::abs(v);
    if (iter > 0 && y1 <= est) break;
    est = y1;
    std::vector<double> xi(n);
    for (std::size_t i = 0; i < n; ++i) xi[i] = y[i] >= 0.0 ? 1.0 : -1.0;
    const auto z = lu.solve_transposed(xi);
    std::size_t j = 0;
    double zmax = -1.0, ztx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(z[i]) > zmax) {
        zmax = std::abs(z[i]);
        j = i;
      }
      ztx += z[i] * x[i];
    }
    if (zmax <= ztx || j == last_j) break;
    last_j = j;
    std::fill(x.begin(), x.end(), 0.0);
    x[j] = 1.0;
  }
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    b[i] = sign * (1.0 + (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0));
  }
  const auto w = lu.solve(b);
  double w1 = 0.0;
  for (double v : w) w1 += std::abs(v);
  return std::max(est, 2.0 * w1 / (3.0 * static_cast<double>(n)));
}

/// 1-norm condition number estimate. Lower bound on the true value and in
/// practice within a small factor of it.
inline double condition_estimate(const Matrix& a) {
  const LuDecomposition lu(a);
  return norm1(a) * inverse_norm1_estimate(lu);
}

// ---------------------------------------------------------------------------
// random matrices

/// Sign convention for sampled core entries. SignedGap draws magnitudes in
/// [0.05, 1] with a random sign; PositiveGap keeps the magnitudes only.
enum class EntryDistribution { SignedGap, PositiveGap };

inline constexpr double kEntryGap = 0.05;

inline double sample_entry(SeededRng& rng, EntryDistribution dist) {
  const std::uint64_t bits = rng.next_u64();
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  const double mag = kEntryGap + (1.0 - kEntryGap) * u;
  if (dist == EntryDistribution::PositiveGap) return mag;
  return (bits & 1u) ? -mag : mag;
}

struct RandomInvertibleOptions {
  double cond_max = 1e6;
  EntryDistribution entries = EntryDistribution::SignedGap;
  int max_rejections = 100;
};

/// Random q×q matrix with every |entry| in [0.05, 1], resampled until its
/// estimated 1-norm condition number is at most cond_max. Returns the
/// matrix together with its factorisation so callers can reuse it.
inline std::pair<Matrix, LuDecomposition> random_invertible_factored(std::size_t q, SeededRng& rng,
                                                                     const RandomInvertibleOptions& opt = {}) {
  if (q == 0) throw Error(Errc::InvalidGeometry, "q must be positive");
  if (!(opt.cond_max > 1.0)) throw Error(Errc::DomainError, "cond_max must exceed 1");
  for (int attempt = 0; attempt <= opt.max_rejections; ++attempt) {
    Matrix m(q, q);
    for (double& v : m.data()) v = sample_entry(rng, opt.entries);
    try {
      LuDecomposition lu(m);
      if (norm1(m) * inverse_norm1_estimate(lu) <= opt.cond_max) return {std::move(m), std::move(lu)};
    } catch (const Error& e) {
      if (e.code() != Errc::SingularMatrix) throw;
    }
  }
  throw Error(Errc::RetryExhausted,
              "no matrix with condition <= " + std::to_string(opt.cond_max) + " after " +
                  std::to_string(opt.max_rejections) + " rejections");
}

inline Matrix random_invertible(std::size_t q, SeededRng& rng, double cond_max = 1e6) {
  return random_invertible_factored(q, rng, {.cond_max = cond_max}).first;
}

// ---------------------------------------------------------------------------
// normalisation

enum class NormMode { Whole, Columns };

inline RowVector unit_l2_normalize(const RowVector& v) {
  const double n = l2_norm(v.data());
  if (n == 0.0) throw Error(Errc::ZeroNorm, "cannot normalise a zero vector");
  RowVector out = v;
  for (double& x : out.data()) x /= n;
  return out;
}

inline Matrix unit_l2_normalize(const Matrix& a, NormMode mode = NormMode::Whole) {
  Matrix out = a;
  if (mode == NormMode::Whole) {
    const double n = frobenius_norm(a);
    if (n == 0.0) throw Error(Errc::ZeroNorm, "cannot normalise a zero matrix");
    for (double& x : out.data()) x /= n;
    return out;
  }
  std::vector<double> norms(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) norms[j] += a(i, j) * a(i, j);
  for (std::size_t j = 0; j < a.cols(); ++j) {
    if (norms[j] == 0.0) throw Error(Errc::ZeroNorm, "column " + std::to_string(j) + " is zero");
    norms[j] = std::sqrt(norms[j]);
  }
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= norms[j];
  return out;
}

}  // namespace mole
