#pragma once

// Privacy and cost metrics: windowed SSIM, the κ sweep of visual
// similarity between original and morphed images, the privacy-reservation
// threshold, and the consolidated overhead report.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mole/attacks.hpp"
#include "mole/augconv.hpp"
#include "mole/d2r.hpp"
#include "mole/error.hpp"
#include "mole/linalg.hpp"
#include "mole/morphing.hpp"
#include "mole/rng.hpp"

namespace mole {

struct SsimParams {
  std::size_t window = 8;
  double dynamic_range = 1.0;

  double c1() const noexcept { return (0.01 * dynamic_range) * (0.01 * dynamic_range); }
  double c2() const noexcept { return (0.03 * dynamic_range) * (0.03 * dynamic_range); }
};

struct SsimComponents {
  double luminance = 0.0;
  double contrast = 0.0;
  double structure = 0.0;
  double ssim = 0.0;
};

namespace detail {

struct WindowStats {
  double mx = 0.0, my = 0.0, vx = 0.0, vy = 0.0, cxy = 0.0;
};

inline WindowStats window_stats(std::span<const double> x, std::span<const double> y, std::size_t side,
                                std::size_t r0, std::size_t c0, std::size_t w) {
  WindowStats s;
  const double cnt = static_cast<double>(w * w);
  for (std::size_t r = r0; r < r0 + w; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      s.mx += x[r * side + c];
      s.my += y[r * side + c];
    }
  s.mx /= cnt;
  s.my /= cnt;
  for (std::size_t r = r0; r < r0 + w; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const double dx = x[r * side + c] - s.mx;
      const double dy = y[r * side + c] - s.my;
      s.vx += dx * dx;
      s.vy += dy * dy;
      s.cxy += dx * dy;
    }
  s.vx /= cnt;
  s.vy /= cnt;
  s.cxy /= cnt;
  return s;
}

inline double ssim_of(const WindowStats& s, double c1, double c2) {
  return ((2.0 * s.mx * s.my + c1) * (2.0 * s.cxy + c2)) /
         ((s.mx * s.mx + s.my * s.my + c1) * (s.vx + s.vy + c2));
}

inline void check_ssim_inputs(const ImageTensor& a, const ImageTensor& b, const SsimParams& p) {
  if (a.channels() != b.channels() || a.side() != b.side())
    throw Error(Errc::GeometryMismatch, "SSIM needs images of identical geometry");
  if (p.window < 2 || p.window > a.side())
    throw Error(Errc::InvalidGeometry, "SSIM window " + std::to_string(p.window) + " does not fit side " +
                                           std::to_string(a.side()));
  if (!(p.dynamic_range > 0.0)) throw Error(Errc::DomainError, "dynamic range must be positive");
  const double eps = 1e-12 * p.dynamic_range;
  for (const auto* img : {&a, &b})
    for (double v : img->data())
      if (v < -eps || v > p.dynamic_range + eps)
        throw Error(Errc::DomainError, "SSIM inputs must lie in [0, L]");
}

}  // namespace detail

/// Mean SSIM over every channel and every non-overlapping window.
/// Variances and covariance use the population (1/n) normalisation.
inline double ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& params = {}) {
  detail::check_ssim_inputs(a, b, params);
  const std::size_t side = a.side();
  const std::size_t w = params.window;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < a.channels(); ++ch)
    for (std::size_t r0 = 0; r0 + w <= side; r0 += w)
      for (std::size_t c0 = 0; c0 + w <= side; c0 += w) {
        total += detail::ssim_of(detail::window_stats(a.channel(ch), b.channel(ch), side, r0, c0, w), params.c1(),
                                 params.c2());
        ++count;
      }
  return total / static_cast<double>(count);
}

/// Luminance, contrast and structure terms of the top-left window of
/// channel `ch`, with c3 = c2/2 so that their product equals the SSIM.
inline SsimComponents ssim_window_components(const ImageTensor& a, const ImageTensor& b, std::size_t ch = 0,
                                             const SsimParams& params = {}) {
  detail::check_ssim_inputs(a, b, params);
  if (ch >= a.channels()) throw Error(Errc::DomainError, "channel out of range");
  const auto s = detail::window_stats(a.channel(ch), b.channel(ch), a.side(), 0, 0, params.window);
  const double c1 = params.c1(), c2 = params.c2(), c3 = c2 / 2.0;
  const double sx = std::sqrt(s.vx), sy = std::sqrt(s.vy);
  SsimComponents out;
  out.luminance = (2.0 * s.mx * s.my + c1) / (s.mx * s.mx + s.my * s.my + c1);
  out.contrast = (2.0 * sx * sy + c2) / (s.vx + s.vy + c2);
  out.structure = (s.cxy + c3) / (sx * sy + c3);
  out.ssim = detail::ssim_of(s, c1, c2);
  return out;
}

// ---------------------------------------------------------------------------
// morphed-image display and the κ sweep

/// How morphed values are mapped into [0, L] before SSIM.
enum class DisplayMap {
  Clamp,   // clamp to [0, L]
  MinMax,  // affine stretch of the image's own range onto [0, L], then clamp
};

inline const char* to_string(DisplayMap d) noexcept { return d == DisplayMap::Clamp ? "clamp" : "minmax"; }

inline ImageTensor display_image(const RowVector& tr, std::size_t alpha, std::size_t m, DisplayMap map,
                                 double dynamic_range = 1.0) {
  ImageTensor img = reroll_image(tr, alpha, m);
  if (map == DisplayMap::MinMax) {
    const auto [lo, hi] = std::ranges::minmax(img.data());
    const double span = hi - lo;
    for (double& v : img.data()) v = span > 0.0 ? (v - lo) / span * dynamic_range : 0.0;
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, dynamic_range);
  return img;
}

struct SweepOptions {
  EntryDistribution entries = EntryDistribution::PositiveGap;
  DisplayMap display = DisplayMap::MinMax;
  SsimParams ssim;
  /// Rows of M′ produced per random stream.
  std::size_t chunk_rows = 64;
};

struct SweepRow {
  std::size_t kappa = 0;
  std::size_t q = 0;
  std::vector<double> ssim;  // one entry per image
  double mean_ssim = 0.0;
};

/// Forward morph of several rows under a core that is generated on the fly
/// and never stored: row r of M′ comes from stream ⌊r/chunk⌋ of `rng`.
/// Memory stays O(rows·αm²) even when q = αm². No conditioning check is
/// done; display metrics need the forward map only.
inline std::vector<RowVector> streamed_morph(const std::vector<RowVector>& rows, std::size_t q, const SeededRng& rng,
                                             EntryDistribution entries, std::size_t chunk_rows = 64) {
  if (rows.empty()) return {};
  const std::size_t len = rows.front().size();
  if (q == 0 || len % q != 0) throw Error(Errc::NonDivisible, "q does not divide the row length");
  if (chunk_rows == 0) throw Error(Errc::DomainError, "chunk_rows must be positive");
  for (const auto& r : rows)
    if (r.size() != len) throw Error(Errc::DimensionMismatch, "rows of unequal length");
  const std::size_t kappa = len / q;
  std::vector<RowVector> out(rows.size(), RowVector(len));
  std::vector<double> mrow(q);
  for (std::size_t r0 = 0; r0 < q; r0 += chunk_rows) {
    SeededRng stream = rng.split(r0 / chunk_rows);
    for (std::size_t r = r0; r < std::min(q, r0 + chunk_rows); ++r) {
      for (double& v : mrow) v = sample_entry(stream, entries);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t s = 0; s < kappa; ++s) {
          const double x = rows[i][s * q + r];
          if (x == 0.0) continue;
          auto dst = out[i].data().subspan(s * q, q);
          for (std::size_t j = 0; j < q; ++j) dst[j] += x * mrow[j];
        }
    }
  }
  return out;
}

/// SSIM between an image and its morph under an explicit core.
inline double morph_display_ssim(const ImageTensor& img, const MorphCore& core, const SweepOptions& opt = {}) {
  const RowVector tr = morph(unroll(img), core);
  return ssim(img, display_image(tr, img.channels(), img.side(), opt.display, opt.ssim.dynamic_range), opt.ssim);
}

/// For each κ: morph every image with a fresh core of side q = αm²/κ drawn
/// from stream κ of `rng`, map to [0, L] and compare with the original.
/// Rows come back ordered by κ descending.
inline std::vector<SweepRow> privacy_sweep(const std::vector<ImageTensor>& images, std::vector<std::size_t> kappas,
                                           const SeededRng& rng, const SweepOptions& opt = {}) {
  if (images.empty()) throw Error(Errc::DomainError, "privacy sweep needs at least one image");
  const std::size_t alpha = images.front().channels();
  const std::size_t m = images.front().side();
  for (const auto& img : images)
    if (img.channels() != alpha || img.side() != m)
      throw Error(Errc::GeometryMismatch, "sweep images must share one geometry");
  for (std::size_t k : kappas) choose_q(alpha, m, k);
  std::ranges::sort(kappas, std::greater<>());
  kappas.erase(std::unique(kappas.begin(), kappas.end()), kappas.end());

  std::vector<RowVector> rows;
  for (const auto& img : images) rows.push_back(unroll(img));
  std::vector<SweepRow> table;
  for (std::size_t k : kappas) {
    const std::size_t q = alpha * m * m / k;
    const auto morphed = streamed_morph(rows, q, rng.split(k), opt.entries, opt.chunk_rows);
    SweepRow row{k, q, {}, 0.0};
    for (std::size_t i = 0; i < images.size(); ++i) {
      const ImageTensor shown = display_image(morphed[i], alpha, m, opt.display, opt.ssim.dynamic_range);
      row.ssim.push_back(ssim(images[i], shown, opt.ssim));
    }
    double sum = 0.0;
    for (double v : row.ssim) sum += v;
    row.mean_ssim = sum / static_cast<double>(row.ssim.size());
    table.push_back(std::move(row));
  }
  return table;
}

inline std::vector<SweepRow> privacy_sweep(const ImageTensor& image, std::vector<std::size_t> kappas,
                                           const SeededRng& rng, const SweepOptions& opt = {}) {
  return privacy_sweep(std::vector<ImageTensor>{image}, std::move(kappas), rng, opt);
}

// ---------------------------------------------------------------------------
// privacy reservation

/// e ≤ σ/N^(1/4)
inline bool privacy_reservation_check(double e, double sigma, std::uint64_t n_elements_m) {
  return e <= sigma / std::pow(static_cast<double>(n_elements_m), 0.25);
}

struct ReservationDemo {
  double threshold = 0.0;  // σ/N^(1/4), N = (αm²/κ)²
  double e_rms = 0.0;      // of the unit-normalised rows
  ImageTensor recovered;   // rescaled to pixel units and clamped to [0, 1]
  double ssim = 0.0;
};

/// What an attack that just meets the privacy reservation would yield:
/// the unit-normalised datum is perturbed in a random direction so that
/// E_rms equals the threshold exactly, then rescaled and displayed.
inline ReservationDemo privacy_reservation_demo(const ImageTensor& img, double sigma, std::size_t kappa,
                                                SeededRng& rng, const SsimParams& params = {}) {
  require_sigma(sigma);
  const std::size_t len = img.size();
  const QChoice qc = choose_q(img.channels(), img.side(), kappa);
  const double n = static_cast<double>(qc.q) * static_cast<double>(qc.q);
  const RowVector d = unroll(img);
  const double scale = l2_norm(d.data());
  if (scale == 0.0) throw Error(Errc::ZeroNorm, "image is all zeros");
  const RowVector du = unit_l2_normalize(d);

  ReservationDemo out;
  out.threshold = sigma / std::pow(n, 0.25);
  RowVector dir(len);
  for (double& v : dir.data()) v = rng.normal();
  dir = unit_l2_normalize(dir);
  const double mag = out.threshold * std::sqrt(static_cast<double>(len));
  RowVector rec(len);
  for (std::size_t i = 0; i < len; ++i) rec[i] = du[i] + mag * dir[i];
  out.e_rms = erms(du, rec);
  for (double& v : rec.data()) v = std::clamp(v * scale, 0.0, 1.0);
  out.recovered = reroll_image(rec, img.channels(), img.side());
  out.ssim = ssim(img, out.recovered, params);
  return out;
}

// ---------------------------------------------------------------------------
// overhead

struct OverheadReport {
  MacCount dp_macs;
  std::uint64_t dev_macs = 0;
  std::uint64_t data_elements = 0;
  std::optional<double> dp_ratio_by_alpha;
  std::optional<double> dp_ratio_direct;
  std::optional<double> dev_ratio;
  std::optional<double> data_ratio;
  std::string note;
};

inline OverheadReport overhead_report(std::size_t alpha, std::size_t m, std::size_t p, std::size_t beta,
                                      std::size_t n, std::size_t kappa,
                                      std::optional<std::uint64_t> base_macs = std::nullopt,
                                      std::optional<std::uint64_t> dataset_elems = std::nullopt) {
  if (beta == 0 || n == 0 || p == 0) throw Error(Errc::InvalidGeometry, "beta, n and p must be positive");
  if (p > m || n > m) throw Error(Errc::InvalidGeometry, "p and n cannot exceed m");
  const QChoice qc = choose_q(alpha, m, kappa);
  OverheadReport r;
  r.dp_macs = dp_mac_count(alpha, qc.q, kappa);
  r.dev_macs = dev_mac_overhead(alpha, m, p, beta, n);
  const std::uint64_t len = static_cast<std::uint64_t>(alpha) * m * m;
  r.data_elements = len * len;
  if (base_macs) {
    if (*base_macs == 0) throw Error(Errc::DomainError, "base MAC count must be positive");
    const auto b = static_cast<double>(*base_macs);
    r.dp_ratio_by_alpha = static_cast<double>(r.dp_macs.by_alpha) / b;
    r.dp_ratio_direct = static_cast<double>(r.dp_macs.direct) / b;
    r.dev_ratio = static_cast<double>(r.dev_macs) / b;
  }
  if (dataset_elems) r.data_ratio = data_overhead(alpha, m, *dataset_elems).ratio;
  r.note =
      "counts depend only on the first-layer geometry; no parameter encodes network depth, and data_elements "
      "does not depend on dataset size";
  return r;
}

}  // namespace mole
