#pragma once

// Data-to-row lowering: a stride-1 convolution expressed as one row-vector
// by matrix product, plus the direct sliding-window reference.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mole/error.hpp"
#include "mole/linalg.hpp"

namespace mole {

/// channels × side × side tensor, channel-major then row-major.
/// The tag keeps images and feature maps from being mixed up.
template <class Tag>
class ChannelTensor {
 public:
  ChannelTensor() = default;

  ChannelTensor(std::size_t channels, std::size_t side, double fill = 0.0)
      : channels_(channels), side_(side), data_(channels * side * side, fill) {
    if (channels == 0 || side == 0) throw Error(Errc::InvalidGeometry, "tensor dimensions must be positive");
  }

  ChannelTensor(std::size_t channels, std::size_t side, std::vector<double> data)
      : channels_(channels), side_(side), data_(std::move(data)) {
    if (channels == 0 || side == 0) throw Error(Errc::InvalidGeometry, "tensor dimensions must be positive");
    if (data_.size() != channels * side * side)
      throw Error(Errc::DimensionMismatch, "tensor data length " + std::to_string(data_.size()) + " for " +
                                               std::to_string(channels) + "x" + std::to_string(side) + "x" +
                                               std::to_string(side));
    detail::require_finite(data_, "tensor");
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t side() const noexcept { return side_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t ch, std::size_t r, std::size_t c) noexcept {
    return data_[(ch * side_ + r) * side_ + c];
  }
  double at(std::size_t ch, std::size_t r, std::size_t c) const noexcept {
    return data_[(ch * side_ + r) * side_ + c];
  }

  std::span<double> channel(std::size_t ch) noexcept { return {data_.data() + ch * side_ * side_, side_ * side_}; }
  std::span<const double> channel(std::size_t ch) const noexcept {
    return {data_.data() + ch * side_ * side_, side_ * side_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const ChannelTensor&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t side_ = 0;
  std::vector<double> data_;
};

struct ImageTag {};
struct FeatureTag {};

/// α-channel m×m input datum.
using ImageTensor = ChannelTensor<ImageTag>;
/// β-channel n×n output of a convolution.
using FeatureTensor = ChannelTensor<FeatureTag>;

/// α×β bank of p×p kernels; weight (i, j, a, b) couples input channel i to
/// output channel j at kernel offset (a, b).
class KernelSet {
 public:
  KernelSet() = default;

  KernelSet(std::size_t alpha, std::size_t beta, std::size_t p, double fill = 0.0)
      : alpha_(alpha), beta_(beta), p_(p), weights_(alpha * beta * p * p, fill) {
    if (alpha == 0 || beta == 0 || p == 0) throw Error(Errc::InvalidGeometry, "kernel dimensions must be positive");
  }

  KernelSet(std::size_t alpha, std::size_t beta, std::size_t p, std::vector<double> weights)
      : alpha_(alpha), beta_(beta), p_(p), weights_(std::move(weights)) {
    if (alpha == 0 || beta == 0 || p == 0) throw Error(Errc::InvalidGeometry, "kernel dimensions must be positive");
    if (weights_.size() != alpha * beta * p * p)
      throw Error(Errc::DimensionMismatch, "kernel weight count mismatch");
    detail::require_finite(weights_, "kernel set");
  }

  std::size_t alpha() const noexcept { return alpha_; }
  std::size_t beta() const noexcept { return beta_; }
  std::size_t p() const noexcept { return p_; }

  double& at(std::size_t i, std::size_t j, std::size_t a, std::size_t b) noexcept {
    return weights_[((i * beta_ + j) * p_ + a) * p_ + b];
  }
  double at(std::size_t i, std::size_t j, std::size_t a, std::size_t b) const noexcept {
    return weights_[((i * beta_ + j) * p_ + a) * p_ + b];
  }

  std::span<double> weights() noexcept { return weights_; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  std::size_t alpha_ = 0;
  std::size_t beta_ = 0;
  std::size_t p_ = 0;
  std::vector<double> weights_;
};

enum class Padding { Valid, SameZero };

inline const char* to_string(Padding p) noexcept { return p == Padding::Valid ? "valid" : "same"; }

inline Padding parse_padding(const std::string& s) {
  if (s == "valid") return Padding::Valid;
  if (s == "same") return Padding::SameZero;
  throw Error(Errc::InvalidGeometry, "unknown padding '" + s + "' (expected valid|same)");
}

/// Output side for a stride-1 convolution; validates the combination.
inline std::size_t output_side(std::size_t m, std::size_t p, Padding padding) {
  if (m == 0 || p == 0) throw Error(Errc::InvalidGeometry, "m and p must be positive");
  if (padding == Padding::Valid) {
    if (m < p) throw Error(Errc::InvalidGeometry, "valid padding needs m >= p");
    return m - p + 1;
  }
  if (p % 2 == 0) throw Error(Errc::InvalidGeometry, "same padding needs an odd kernel side");
  return m;
}

/// Lowered convolution: unroll(D) · matrix = unroll(conv(D)).
struct ConvMatrix {
  Matrix matrix;  // αm² × βn²
  std::size_t alpha = 0;
  std::size_t m = 0;
  std::size_t beta = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  Padding padding = Padding::Valid;
};

/// Channel-major, then row-major: element (i, c, d) lands at i·m² + c·m + d.
template <class Tag>
RowVector unroll(const ChannelTensor<Tag>& t) {
  return RowVector(std::vector<double>(t.data().begin(), t.data().end()));
}

inline ImageTensor reroll_image(const RowVector& v, std::size_t alpha, std::size_t m) {
  if (v.size() != alpha * m * m)
    throw Error(Errc::DimensionMismatch, "row of length " + std::to_string(v.size()) + " cannot hold " +
                                             std::to_string(alpha) + " channels of side " + std::to_string(m));
  return ImageTensor(alpha, m, v.values());
}

inline FeatureTensor reroll_features(const RowVector& f, std::size_t beta, std::size_t n) {
  if (f.size() != beta * n * n)
    throw Error(Errc::DimensionMismatch, "feature row of length " + std::to_string(f.size()) + " cannot hold " +
                                             std::to_string(beta) + " channels of side " + std::to_string(n));
  return FeatureTensor(beta, n, f.values());
}

/// Visits every (row, column, weight) triple that the lowering places in C.
/// Valid: input coordinate (c+a, d+b). SameZero: (c+a-h, d+b-h) with
/// h = p/2, skipping coordinates outside the image.
template <class Fn>
void for_each_conv_entry(const KernelSet& k, std::size_t m, Padding padding, Fn&& fn) {
  const std::size_t p = k.p();
  const std::size_t n = output_side(m, p, padding);
  const long half = padding == Padding::SameZero ? static_cast<long>(p / 2) : 0;
  const long ms = static_cast<long>(m);
  for (std::size_t i = 0; i < k.alpha(); ++i)
    for (std::size_t j = 0; j < k.beta(); ++j)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) {
          const double w = k.at(i, j, a, b);
          for (std::size_t c = 0; c < n; ++c) {
            const long r = static_cast<long>(c + a) - half;
            if (r < 0 || r >= ms) continue;
            for (std::size_t d = 0; d < n; ++d) {
              const long s = static_cast<long>(d + b) - half;
              if (s < 0 || s >= ms) continue;
              const std::size_t x = i * m * m + static_cast<std::size_t>(r) * m + static_cast<std::size_t>(s);
              const std::size_t y = j * n * n + c * n + d;
              fn(x, y, w);
            }
          }
        }
}

inline ConvMatrix build_conv_matrix(const KernelSet& k, std::size_t m, Padding padding) {
  const std::size_t n = output_side(m, k.p(), padding);
  ConvMatrix c{Matrix(k.alpha() * m * m, k.beta() * n * n), k.alpha(), m, k.beta(), n, k.p(), padding};
  // Each (x, y) receives exactly one weight, so assignment is exact.
  for_each_conv_entry(k, m, padding, [&](std::size_t x, std::size_t y, double w) { c.matrix(x, y) = w; });
  return c;
}

/// Reference: stride-1 cross-correlation (no kernel flip), summed over
/// input channels, no bias.
inline FeatureTensor conv_direct(const ImageTensor& d, const KernelSet& k, Padding padding) {
  if (d.channels() != k.alpha())
    throw Error(Errc::GeometryMismatch, "image has " + std::to_string(d.channels()) + " channels, kernels expect " +
                                            std::to_string(k.alpha()));
  const std::size_t m = d.side();
  const std::size_t p = k.p();
  const std::size_t n = output_side(m, p, padding);
  const long half = padding == Padding::SameZero ? static_cast<long>(p / 2) : 0;
  const long ms = static_cast<long>(m);
  FeatureTensor f(k.beta(), n);
  for (std::size_t j = 0; j < k.beta(); ++j)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t e = 0; e < n; ++e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k.alpha(); ++i)
          for (std::size_t a = 0; a < p; ++a) {
            const long r = static_cast<long>(c + a) - half;
            if (r < 0 || r >= ms) continue;
            for (std::size_t b = 0; b < p; ++b) {
              const long s = static_cast<long>(e + b) - half;
              if (s < 0 || s >= ms) continue;
              acc += k.at(i, j, a, b) * d.at(i, static_cast<std::size_t>(r), static_cast<std::size_t>(s));
            }
          }
        f.at(j, c, e) = acc;
      }
  return f;
}

inline FeatureTensor conv_via_d2r(const ImageTensor& d, const ConvMatrix& c) {
  if (d.channels() != c.alpha || d.side() != c.m)
    throw Error(Errc::DimensionMismatch, "image geometry does not match the lowered convolution");
  return reroll_features(row_times(unroll(d), c.matrix), c.beta, c.n);
}

}  // namespace mole
