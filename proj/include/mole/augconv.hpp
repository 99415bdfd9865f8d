#pragma once

// Aug-Conv layer: the lowered first convolution pre-multiplied by M⁻¹,
// with its output-channel column groups shuffled.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mole/d2r.hpp"
#include "mole/error.hpp"
#include "mole/linalg.hpp"
#include "mole/morphing.hpp"
#include "mole/rng.hpp"

namespace mole {

/// Output channel g of the shuffled layer carries original channel order[g].
class ChannelPermutation {
 public:
  ChannelPermutation() = default;

  explicit ChannelPermutation(std::vector<std::size_t> order) : order_(std::move(order)) {
    std::vector<bool> seen(order_.size(), false);
    for (std::size_t v : order_) {
      if (v >= order_.size() || seen[v]) throw Error(Errc::DomainError, "channel order is not a permutation");
      seen[v] = true;
    }
  }

  static ChannelPermutation identity(std::size_t beta) {
    std::vector<std::size_t> o(beta);
    std::iota(o.begin(), o.end(), std::size_t{0});
    return ChannelPermutation(std::move(o));
  }

  std::size_t beta() const noexcept { return order_.size(); }
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  std::size_t operator[](std::size_t g) const noexcept { return order_[g]; }

  bool is_identity() const noexcept {
    for (std::size_t g = 0; g < order_.size(); ++g)
      if (order_[g] != g) return false;
    return true;
  }

  ChannelPermutation inverse() const {
    std::vector<std::size_t> inv(order_.size());
    for (std::size_t g = 0; g < order_.size(); ++g) inv[order_[g]] = g;
    return ChannelPermutation(std::move(inv));
  }

  bool operator==(const ChannelPermutation&) const = default;

 private:
  std::vector<std::size_t> order_;
};

/// Uniform permutation by Fisher-Yates.
inline ChannelPermutation random_permutation(std::size_t beta, SeededRng& rng) {
  if (beta == 0) throw Error(Errc::InvalidGeometry, "beta must be positive");
  std::vector<std::size_t> o(beta);
  std::iota(o.begin(), o.end(), std::size_t{0});
  for (std::size_t i = beta - 1; i > 0; --i) std::swap(o[i], o[rng.below(i + 1)]);
  return ChannelPermutation(std::move(o));
}

/// Reorders feature channels the same way the Aug-Conv layer reorders its
/// column groups.
inline FeatureTensor permute_features(const FeatureTensor& f, const ChannelPermutation& perm) {
  if (f.channels() != perm.beta()) throw Error(Errc::GeometryMismatch, "permutation size differs from channels");
  FeatureTensor out(f.channels(), f.side());
  for (std::size_t g = 0; g < perm.beta(); ++g) std::ranges::copy(f.channel(perm[g]), out.channel(g).begin());
  return out;
}

/// The developer-facing layer. Carries no secret material.
struct AugConvMatrix {
  Matrix matrix;  // αm² × βn²
  std::size_t alpha = 0;
  std::size_t m = 0;
  std::size_t beta = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  Padding padding = Padding::Valid;
  bool permuted = false;
};

/// C^ac = M⁻¹·C computed band by band (each q-row band of C is multiplied
/// by M′⁻¹), then column groups of n² are reordered by `perm`.
inline AugConvMatrix build_augconv(const MorphCore& core, const ConvMatrix& c, const ChannelPermutation& perm) {
  const std::size_t rows = c.matrix.rows();
  if (core.length() != rows)
    throw Error(Errc::GeometryMismatch, "morph core covers " + std::to_string(core.length()) +
                                            " inputs, convolution expects " + std::to_string(rows));
  if (perm.beta() != c.beta)
    throw Error(Errc::GeometryMismatch, "permutation has " + std::to_string(perm.beta()) +
                                            " channels, convolution has " + std::to_string(c.beta));
  const std::size_t q = core.q();
  const std::size_t cols = c.matrix.cols();
  const std::size_t group = c.n * c.n;
  const Matrix& inv = core.inverse();

  Matrix band(rows, cols);
  for (std::size_t s = 0; s < core.kappa(); ++s) {
    for (std::size_t r = 0; r < q; ++r) {
      auto out = band.row(s * q + r);
      const auto irow = inv.row(r);
      for (std::size_t k = 0; k < q; ++k) {
        const double w = irow[k];
        if (w == 0.0) continue;
        const auto crow = c.matrix.row(s * q + k);
        for (std::size_t j = 0; j < cols; ++j) out[j] += w * crow[j];
      }
    }
  }

  AugConvMatrix ac{Matrix(rows, cols), c.alpha, c.m, c.beta, c.n, c.p, c.padding, !perm.is_identity()};
  for (std::size_t x = 0; x < rows; ++x) {
    const auto src = band.row(x);
    auto dst = ac.matrix.row(x);
    for (std::size_t g = 0; g < c.beta; ++g)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(perm[g] * group), group,
                  dst.begin() + static_cast<std::ptrdiff_t>(g * group));
  }
  return ac;
}

inline FeatureTensor apply_augconv(const RowVector& tr, const AugConvMatrix& ac) {
  if (tr.size() != ac.matrix.rows())
    throw Error(Errc::DimensionMismatch, "morphed row of length " + std::to_string(tr.size()) +
                                             ", layer expects " + std::to_string(ac.matrix.rows()));
  return reroll_features(row_times(tr, ac.matrix), ac.beta, ac.n);
}

struct DataOverhead {
  std::uint64_t elements = 0;  // (αm²)², entries of C^ac
  double ratio = 0.0;          // elements / dataset elements
};

inline DataOverhead data_overhead(std::uint64_t alpha, std::uint64_t m, std::uint64_t dataset_elems) {
  if (dataset_elems == 0) throw Error(Errc::DomainError, "dataset element count must be positive");
  const std::uint64_t len = alpha * m * m;
  const std::uint64_t elements = len * len;
  return {elements, static_cast<double>(elements) / static_cast<double>(dataset_elems)};
}

/// Extra developer-side MACs: (m² − p²)·α·β·n².
inline std::uint64_t dev_mac_overhead(std::uint64_t alpha, std::uint64_t m, std::uint64_t p, std::uint64_t beta,
                                      std::uint64_t n) {
  if (p > m) throw Error(Errc::InvalidGeometry, "kernel larger than input");
  return (m * m - p * p) * alpha * beta * n * n;
}

}  // namespace mole
