#pragma once

// Data morphing: right-multiplication of the unrolled datum by a
// block-diagonal matrix built from κ copies of a secret q×q core.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "mole/error.hpp"
#include "mole/linalg.hpp"
#include "mole/rng.hpp"

namespace mole {

struct QChoice {
  std::size_t q = 0;
  std::size_t kappa = 0;
  /// ⌊αm²/n²⌋ when an output side was supplied.
  std::optional<std::size_t> kappa_bound;
  /// False when κ exceeds the reverse-attack bound αm²/n².
  bool within_bound = true;
};

/// q = αm²/κ; κ must divide αm².
inline QChoice choose_q(std::size_t alpha, std::size_t m, std::size_t kappa,
                        std::optional<std::size_t> n = std::nullopt) {
  const std::size_t len = alpha * m * m;
  if (len == 0) throw Error(Errc::InvalidGeometry, "alpha and m must be positive");
  if (kappa == 0 || len % kappa != 0)
    throw Error(Errc::NonDivisible, "kappa=" + std::to_string(kappa) + " does not divide alpha*m^2=" +
                                        std::to_string(len));
  QChoice out{len / kappa, kappa, std::nullopt, true};
  if (n) {
    if (*n == 0) throw Error(Errc::InvalidGeometry, "n must be positive");
    const std::size_t n2 = *n * *n;
    out.kappa_bound = len / n2;
    // κ ≤ αm²/n²  ⇔  κ·n² ≤ αm²
    out.within_bound = kappa * n2 <= len;
  }
  return out;
}

/// Secret core M′ with its cached inverse. Immutable once built.
class MorphCore {
 public:
  /// Wraps a caller-supplied core (used for identity or test cores).
  MorphCore(Matrix mprime, std::size_t kappa) : mprime_(std::move(mprime)), kappa_(kappa) {
    if (mprime_.rows() != mprime_.cols()) throw Error(Errc::DimensionMismatch, "core must be square");
    if (kappa_ == 0) throw Error(Errc::InvalidGeometry, "kappa must be positive");
    inverse_ = invert(mprime_);
  }

  /// Draws a fresh core for the given geometry: every entry nonzero,
  /// condition estimate at most cond_max.
  static MorphCore generate(std::size_t alpha, std::size_t m, std::size_t kappa, SeededRng& rng,
                            double cond_max = 1e6) {
    const QChoice qc = choose_q(alpha, m, kappa);
    auto [mp, lu] = random_invertible_factored(qc.q, rng, {.cond_max = cond_max});
    return MorphCore(std::move(mp), lu.inverse(), kappa);
  }

  std::size_t q() const noexcept { return mprime_.rows(); }
  std::size_t kappa() const noexcept { return kappa_; }
  /// Length of the morphed row, κ·q = αm².
  std::size_t length() const noexcept { return kappa_ * q(); }
  const Matrix& mprime() const noexcept { return mprime_; }
  const Matrix& inverse() const noexcept { return inverse_; }

 private:
  MorphCore(Matrix mprime, Matrix inverse, std::size_t kappa)
      : mprime_(std::move(mprime)), inverse_(std::move(inverse)), kappa_(kappa) {}

  Matrix mprime_;
  Matrix inverse_;
  std::size_t kappa_;
};

/// Materialises M: κ copies of M′ on the diagonal, zero elsewhere.
inline Matrix build_morph_matrix(const MorphCore& core) {
  const std::size_t q = core.q();
  Matrix m(core.length(), core.length());
  for (std::size_t blk = 0; blk < core.kappa(); ++blk)
    for (std::size_t r = 0; r < q; ++r)
      for (std::size_t c = 0; c < q; ++c) m(blk * q + r, blk * q + c) = core.mprime()(r, c);
  return m;
}

namespace detail {

inline RowVector blockwise_times(const RowVector& x, const Matrix& block, std::size_t kappa) {
  const std::size_t q = block.rows();
  if (x.size() != kappa * q)
    throw Error(Errc::DimensionMismatch,
                "row of length " + std::to_string(x.size()) + " for kappa*q=" + std::to_string(kappa * q));
  RowVector y(x.size());
  for (std::size_t s = 0; s < kappa; ++s) {
    const auto seg = x.data().subspan(s * q, q);
    auto out = y.data().subspan(s * q, q);
    for (std::size_t k = 0; k < q; ++k) {
      const double xk = seg[k];
      if (xk == 0.0) continue;
      const auto brow = block.row(k);
      for (std::size_t j = 0; j < q; ++j) out[j] += xk * brow[j];
    }
  }
  return y;
}

}  // namespace detail

/// T^r = D^r · M, one q-segment at a time; M is never formed.
inline RowVector morph(const RowVector& dr, const MorphCore& core) {
  return detail::blockwise_times(dr, core.mprime(), core.kappa());
}

/// Forward morph from a bare core, for callers that never need the inverse.
inline RowVector morph(const RowVector& dr, const Matrix& mprime, std::size_t kappa) {
  if (mprime.rows() != mprime.cols()) throw Error(Errc::DimensionMismatch, "core must be square");
  if (kappa == 0) throw Error(Errc::InvalidGeometry, "kappa must be positive");
  return detail::blockwise_times(dr, mprime, kappa);
}

/// D^r = T^r · M⁻¹ using the cached core inverse.
inline RowVector unmorph(const RowVector& tr, const MorphCore& core) {
  return detail::blockwise_times(tr, core.inverse(), core.kappa());
}

struct MacCount {
  std::uint64_t by_alpha = 0;  // α·q², one q×q product per input channel
  std::uint64_t direct = 0;    // κ·q², multiplications block-wise morph performs
};

inline MacCount dp_mac_count(std::uint64_t alpha, std::uint64_t q, std::uint64_t kappa) {
  if (alpha == 0 || q == 0 || kappa == 0) throw Error(Errc::InvalidGeometry, "alpha, q, kappa must be positive");
  return {alpha * q * q, kappa * q * q};
}

}  // namespace mole
