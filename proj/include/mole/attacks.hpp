#pragma once

// Attack-success bounds kept in the log domain, Monte-Carlo checks of the
// two lemmas behind them, and the executable attacks (D-T pair solve,
// brute-force recovery with a guessed morphing matrix).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mole/error.hpp"
#include "mole/linalg.hpp"
#include "mole/morphing.hpp"
#include "mole/rng.hpp"

namespace mole {

/// Probability carried as log2. Values below 2^-1000 are never converted
/// back to linear space.
class LogProb {
 public:
  static constexpr double kLinearFloor = -1000.0;

  static LogProb from_log2(double v) {
    if (std::isnan(v)) throw Error(Errc::DomainError, "log-probability is NaN");
    return LogProb(std::min(v, 0.0));
  }
  static LogProb one() { return LogProb(0.0); }
  static LogProb zero() { return LogProb(-std::numeric_limits<double>::infinity()); }

  double log2() const noexcept { return log2_; }
  double log10() const noexcept { return log2_ * 0.30102999566398119521; }
  bool is_zero() const noexcept { return std::isinf(log2_); }

  std::optional<double> linear() const {
    if (is_zero()) return 0.0;
    if (log2_ < kLinearFloor) return std::nullopt;
    return std::exp2(log2_);
  }

 private:
  explicit LogProb(double v) : log2_(v) {}
  double log2_;
};

// ---------------------------------------------------------------------------
// closed-form bounds

/// Upper bound on the chance that a uniformly random unit point in N
/// dimensions lands within distance d of a fixed one: ½·d^(N-1).
inline LogProb lemma1_bound(std::uint64_t n_dims, double d) {
  if (n_dims < 2) throw Error(Errc::DomainError, "cap bound needs N >= 2");
  if (!(d > 0.0) || d > 1.0) throw Error(Errc::DomainError, "distance must lie in (0, 1], got " + std::to_string(d));
  return LogProb::from_log2(-1.0 + static_cast<double>(n_dims - 1) * std::log2(d));
}

inline void require_sigma(double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0))
    throw Error(Errc::DomainError, "privacy reservation sigma must lie in (0, 1), got " + std::to_string(sigma));
}

/// Brute force on M: N = (αm²/κ)² elements, bound ½·σ^(N-1).
inline LogProb bf_bound_M(double sigma, std::size_t alpha, std::size_t m, std::size_t kappa) {
  require_sigma(sigma);
  const auto q = static_cast<std::uint64_t>(choose_q(alpha, m, kappa).q);
  const std::uint64_t n = q * q;
  return LogProb::from_log2(-1.0 + static_cast<double>(n - 1) * std::log2(sigma));
}

/// Brute force on the channel order: 1/β!.
inline LogProb bf_bound_rand(std::size_t beta) {
  if (beta == 0) throw Error(Errc::InvalidGeometry, "beta must be positive");
  return LogProb::from_log2(-std::lgamma(static_cast<double>(beta) + 1.0) / std::log(2.0));
}

struct ReverseAnalysis {
  std::uint64_t n_unknowns = 0;   // αm²/κ + αp²
  std::uint64_t n_equations = 0;  // n²
  std::uint64_t kappa_max = 0;    // ⌊αm²/n²⌋
  LogProb p_ar = LogProb::one();  // full exponent, including the αp² − 1 terms
  double log2_leading = 0.0;      // (q − n²)·q·log2 σ, the dominant term alone
  /// κ exceeds αm²/n²: the equation set is no longer underdetermined in
  /// the sense of the κ bound.
  bool solvable_configuration = false;
  /// Raw count comparison N_eq ≥ N_unk (stricter than the κ bound).
  bool equations_cover_unknowns = false;
};

inline ReverseAnalysis augconv_reverse_analysis(std::size_t alpha, std::size_t m, std::size_t n, std::size_t p,
                                                std::size_t kappa, double sigma) {
  if (n == 0 || p == 0) throw Error(Errc::InvalidGeometry, "n and p must be positive");
  if (n > m || p > m) throw Error(Errc::InvalidGeometry, "n and p cannot exceed m");
  require_sigma(sigma);
  const QChoice qc = choose_q(alpha, m, kappa, n);
  const auto q = static_cast<std::int64_t>(qc.q);
  const auto n2 = static_cast<std::int64_t>(n * n);
  const auto ap2 = static_cast<std::int64_t>(alpha * p * p);

  ReverseAnalysis r;
  r.n_unknowns = static_cast<std::uint64_t>(q + ap2);
  r.n_equations = static_cast<std::uint64_t>(n2);
  r.kappa_max = *qc.kappa_bound;
  const double ls = std::log2(sigma);
  const std::int64_t exponent = (q - n2) * q + ap2 - 1;
  r.p_ar = LogProb::from_log2(-1.0 + static_cast<double>(exponent) * ls);
  r.log2_leading = std::min(0.0, static_cast<double>((q - n2) * q) * ls);
  r.solvable_configuration = !qc.within_bound;
  r.equations_cover_unknowns = r.n_equations >= r.n_unknowns;
  return r;
}

// ---------------------------------------------------------------------------
// Monte-Carlo checks

struct MonteCarloResult {
  std::uint64_t hits = 0;
  std::uint64_t trials = 0;

  double fraction() const noexcept { return trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0; }
  /// Binomial standard error of a probability p at this trial count.
  double std_error(double p) const noexcept {
    return trials ? std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(trials)) : 0.0;
  }
};

inline std::vector<double> random_unit_point(std::size_t n, SeededRng& rng) {
  std::vector<double> v(n);
  double s = 0.0;
  do {
    s = 0.0;
    for (double& x : v) {
      x = rng.normal();
      s += x * x;
    }
  } while (s == 0.0);
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
  return v;
}

/// Fraction of uniform point pairs on the unit sphere in R^N that lie
/// within l2 distance d of each other.
inline MonteCarloResult lemma1_montecarlo(std::size_t n_dims, double d, std::uint64_t trials, SeededRng& rng) {
  if (n_dims < 2 || n_dims > 16) throw Error(Errc::DomainError, "Monte-Carlo check supports 2 <= N <= 16");
  if (!(d > 0.0) || d > 1.0) throw Error(Errc::DomainError, "distance must lie in (0, 1], got " + std::to_string(d));
  if (trials < 10000) throw Error(Errc::DomainError, "at least 10^4 trials are required");
  MonteCarloResult r{0, trials};
  const double d2 = d * d;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto a = random_unit_point(n_dims, rng);
    const auto b = random_unit_point(n_dims, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < n_dims; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    if (s <= d2) ++r.hits;
  }
  return r;
}

struct Lemma2Result {
  double empirical_mean_sse = 0.0;  // mean over trials of ||T·M⁻¹ − T·G||²
  double predicted = 0.0;           // ||M⁻¹ − G||_F² / N′
  double residual = 0.0;            // |empirical − predicted| / predicted (0 when both vanish)
};

/// Checks E[SSE] = ||M⁻¹ − G||_F² / N′ for unit T with i.i.d. entries.
/// T is drawn as a normalised standard-normal vector, which makes the
/// entries exchangeable and zero-mean.
inline Lemma2Result lemma2_check(const Matrix& minv, const Matrix& g, std::uint64_t trials, SeededRng& rng) {
  if (minv.rows() != minv.cols() || g.rows() != minv.rows() || g.cols() != minv.cols())
    throw Error(Errc::DimensionMismatch, "expected-error check needs two square matrices of equal size");
  if (trials == 0) throw Error(Errc::DomainError, "trials must be positive");
  const std::size_t np = minv.rows();
  Matrix diff(np, np);
  for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] = minv.data()[i] - g.data()[i];

  Lemma2Result r;
  const double fro = frobenius_norm(diff);
  r.predicted = fro * fro / static_cast<double>(np);
  double acc = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto tr = random_unit_point(np, rng);
    const RowVector e = row_times(tr, diff);
    double s = 0.0;
    for (double v : e.data()) s += v * v;
    acc += s;
  }
  r.empirical_mean_sse = acc / static_cast<double>(trials);
  if (r.predicted == 0.0)
    r.residual = r.empirical_mean_sse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  else
    r.residual = std::abs(r.empirical_mean_sse - r.predicted) / r.predicted;
  return r;
}

/// Random M⁻¹ and G, each scaled to squared Frobenius norm N′.
inline Lemma2Result lemma2_check(std::size_t n_prime, std::uint64_t trials, SeededRng& rng) {
  if (n_prime < 4 || n_prime > 64) throw Error(Errc::DomainError, "expected-error check supports 4 <= N' <= 64");
  const double scale = std::sqrt(static_cast<double>(n_prime));
  auto draw = [&] {
    Matrix a(n_prime, n_prime);
    for (double& v : a.data()) v = sample_entry(rng, EntryDistribution::SignedGap);
    a = unit_l2_normalize(a);
    for (double& v : a.data()) v *= scale;
    return a;
  };
  const Matrix minv = draw();
  const Matrix g = draw();
  return lemma2_check(minv, g, trials, rng);
}

// ---------------------------------------------------------------------------
// D-T pair attack

enum class PairMode {
  Strict,   // q pairs, one q-segment each
  Segment,  // ⌈q/κ⌉ pairs, every q-segment of every pair used
};

inline std::size_t pairs_required(std::size_t q, std::size_t kappa, PairMode mode) {
  if (q == 0 || kappa == 0) throw Error(Errc::InvalidGeometry, "q and kappa must be positive");
  return mode == PairMode::Strict ? q : (q + kappa - 1) / kappa;
}

/// Recovers M′ from known (D^r, T^r) pairs by solving 𝔻·M′ = 𝕋.
inline Matrix dt_pair_attack(const std::vector<std::pair<RowVector, RowVector>>& pairs, std::size_t q,
                             std::size_t kappa, PairMode mode = PairMode::Strict) {
  const std::size_t need = pairs_required(q, kappa, mode);
  if (pairs.size() < need)
    throw Error(Errc::InsufficientPairs,
                std::to_string(pairs.size()) + " pairs supplied, " + std::to_string(need) + " required");
  Matrix dd(q, q), tt(q, q);
  std::size_t row = 0;
  for (const auto& [d, t] : pairs) {
    if (d.size() != kappa * q || t.size() != kappa * q)
      throw Error(Errc::DimensionMismatch, "pair length differs from kappa*q=" + std::to_string(kappa * q));
    const std::size_t segs = mode == PairMode::Strict ? 1 : kappa;
    for (std::size_t s = 0; s < segs && row < q; ++s, ++row) {
      std::ranges::copy(d.data().subspan(s * q, q), dd.row(row).begin());
      std::ranges::copy(t.data().subspan(s * q, q), tt.row(row).begin());
    }
    if (row == q) break;
  }
  try {
    return LuDecomposition(dd).solve(tt);
  } catch (const Error& e) {
    if (e.code() == Errc::SingularMatrix) throw Error(Errc::RankDeficient, "stacked data matrix is singular");
    throw;
  }
}

/// max |recovered − truth| / max |truth|
inline double relative_max_error(const Matrix& recovered, const Matrix& truth) {
  const double scale = max_abs(truth.data());
  return max_abs_diff(recovered, truth) / (scale > 0.0 ? scale : 1.0);
}

// ---------------------------------------------------------------------------
// brute-force recovery

struct RecoveryReport {
  RowVector recovered;
  double e_rms = 0.0;
  double sigma_threshold = 0.0;  // σ / N^(1/4), N = len²
  bool success = false;
};

inline double erms(const RowVector& a, const RowVector& b);

/// 𝒟^r = T^r·G⁻¹ and the success verdict E_rms ≤ σ/⁴√N.
inline RecoveryReport brute_force_recover(const RowVector& tr, const Matrix& g, const RowVector& true_dr,
                                          double sigma) {
  require_sigma(sigma);
  if (g.rows() != g.cols() || g.rows() != tr.size())
    throw Error(Errc::DimensionMismatch, "guess must be square and match the morphed row");
  if (true_dr.size() != tr.size()) throw Error(Errc::DimensionMismatch, "reference row length mismatch");
  // x·G = t  ⇔  Gᵀ·xᵀ = tᵀ
  RecoveryReport r;
  r.recovered = RowVector(LuDecomposition(g).solve_transposed(tr.data()));
  r.e_rms = erms(true_dr, r.recovered);
  const double n = static_cast<double>(tr.size()) * static_cast<double>(tr.size());
  r.sigma_threshold = sigma / std::pow(n, 0.25);
  r.success = r.e_rms <= r.sigma_threshold;
  return r;
}

/// Random guessing against a unit-column core of side q: D^r is a unit
/// row with entries drawn from [0, 1), M′ and every guess G have unit
/// columns. Counts guesses that meet the success threshold.
inline MonteCarloResult brute_force_montecarlo(std::size_t q, double sigma, std::uint64_t trials, SeededRng& rng) {
  require_sigma(sigma);
  if (q < 2) throw Error(Errc::DomainError, "q must be at least 2");
  const Matrix m = unit_l2_normalize(random_invertible(q, rng), NormMode::Columns);
  RowVector dr(q);
  for (double& v : dr.data()) v = rng.uniform01();
  dr = unit_l2_normalize(dr);
  const RowVector tr = row_times(dr, m);
  MonteCarloResult r{0, trials};
  for (std::uint64_t t = 0; t < trials; ++t) {
    Matrix g(q, q);
    for (double& v : g.data()) v = sample_entry(rng, EntryDistribution::SignedGap);
    g = unit_l2_normalize(g, NormMode::Columns);
    try {
      if (brute_force_recover(tr, g, dr, sigma).success) ++r.hits;
    } catch (const Error& e) {
      if (e.code() != Errc::SingularMatrix) throw;
    }
  }
  return r;
}

inline double erms(const RowVector& a, const RowVector& b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "erms length mismatch");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace mole
