#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"

using namespace mole;

namespace {

/// Exact probability that two uniform points on S^(N-1) lie within chord
/// distance d: the polar angle θ between them has density ∝ sin^(N-2) θ and
/// the chord is 2·sin(θ/2). Integrated by composite Simpson.
double exact_cap_fraction(std::size_t n, double d) {
  const double theta_d = 2.0 * std::asin(std::min(1.0, d / 2.0));
  auto integrate = [n](double hi) {
    const int steps = 20000;
    const double h = hi / steps;
    double s = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      s += w * std::pow(std::sin(i * h), static_cast<double>(n) - 2.0);
    }
    return s * h / 3.0;
  };
  return integrate(theta_d) / integrate(std::numbers::pi);
}

}  // namespace

TEST(LogProb, Basics) {
  EXPECT_EQ(LogProb::one().log2(), 0.0);
  EXPECT_TRUE(LogProb::zero().is_zero());
  EXPECT_EQ(*LogProb::zero().linear(), 0.0);
  EXPECT_EQ(LogProb::from_log2(3.0).log2(), 0.0);
  EXPECT_DOUBLE_EQ(*LogProb::from_log2(-3.0).linear(), 0.125);
  EXPECT_FALSE(LogProb::from_log2(-1001.0).linear().has_value());
  EXPECT_NEAR(LogProb::from_log2(-10.0).log10(), -10.0 * std::log10(2.0), 1e-12);
  EXPECT_THROW(LogProb::from_log2(std::nan("")), Error);
}

TEST(Lemma1, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(lemma1_bound(2, 1.0).log2(), -1.0);
  EXPECT_DOUBLE_EQ(*lemma1_bound(3, 0.5).linear(), 0.125);
  EXPECT_DOUBLE_EQ(lemma1_bound(3072ull * 3072ull, 0.5).log2(), -9437184.0);
  EXPECT_THROW(lemma1_bound(2, 1.5), Error);
  EXPECT_THROW(lemma1_bound(1, 0.5), Error);
  EXPECT_THROW(lemma1_bound(2, 0.0), Error);
}

TEST(Lemma1, Monotone) {
  EXPECT_LT(lemma1_bound(5, 0.5).log2(), lemma1_bound(4, 0.5).log2());
  EXPECT_GT(lemma1_bound(5, 0.6).log2(), lemma1_bound(5, 0.5).log2());
}

TEST(Lemma1, ExactOracleAgreesWithCapFormula) {
  // On S² the cap fraction is h/2 with h = d²/2.
  EXPECT_NEAR(exact_cap_fraction(3, 0.5), 0.0625, 1e-9);
  EXPECT_NEAR(exact_cap_fraction(2, 1.0), 1.0 / 3.0, 1e-9);
}

TEST(Lemma1, MonteCarloMatchesExactAndStaysUnderBound) {
  SeededRng rng(1);
  for (std::size_t n : {2u, 3u, 4u, 8u})
    for (double d : {0.1, 0.3, 0.5, 1.0}) {
      const MonteCarloResult r = lemma1_montecarlo(n, d, 20000, rng);
      const double exact = exact_cap_fraction(n, d);
      const double bound = *lemma1_bound(n, d).linear();
      EXPECT_LE(exact, bound) << n << " " << d;
      const double se = std::max(r.std_error(exact), 1.0 / 20000.0);
      EXPECT_NEAR(r.fraction(), exact, 4.0 * se) << n << " " << d;
      EXPECT_LE(r.fraction(), bound + 3.0 * r.std_error(bound)) << n << " " << d;
    }
}

TEST(Lemma1, MonteCarloValidation) {
  SeededRng rng(2);
  EXPECT_THROW(lemma1_montecarlo(2, 2.0, 10000, rng), Error);
  EXPECT_THROW(lemma1_montecarlo(17, 0.5, 10000, rng), Error);
  EXPECT_THROW(lemma1_montecarlo(3, 0.5, 100, rng), Error);
}

TEST(Lemma2, ResidualSmall) {
  SeededRng rng(3);
  for (std::size_t n : {4u, 8u, 16u}) EXPECT_LE(lemma2_check(n, 20000, rng).residual, 0.1) << n;
  EXPECT_THROW(lemma2_check(3, 100, rng), Error);
  EXPECT_THROW(lemma2_check(65, 100, rng), Error);
}

TEST(Lemma2, ZeroDistanceAndQuadraticScaling) {
  SeededRng rng(4);
  const Matrix a = mole::test::random_matrix(6, 6, rng);
  const Lemma2Result same = lemma2_check(a, a, 1000, rng);
  EXPECT_EQ(same.empirical_mean_sse, 0.0);
  EXPECT_EQ(same.residual, 0.0);

  const Matrix g = mole::test::random_matrix(6, 6, rng);
  Matrix g2 = a;  // a + 2(g − a): difference doubled
  for (std::size_t i = 0; i < g2.size(); ++i) g2.data()[i] = a.data()[i] + 2.0 * (g.data()[i] - a.data()[i]);
  SeededRng r1(5), r2(5);
  const Lemma2Result one = lemma2_check(a, g, 2000, r1);
  const Lemma2Result two = lemma2_check(a, g2, 2000, r2);
  EXPECT_NEAR(two.predicted, 4.0 * one.predicted, 1e-12 * two.predicted);
  EXPECT_NEAR(two.empirical_mean_sse, 4.0 * one.empirical_mean_sse, 1e-10 * two.empirical_mean_sse);
}

TEST(BruteForceBound, Examples) {
  EXPECT_DOUBLE_EQ(bf_bound_M(0.5, 3, 32, 1).log2(), -9437184.0);
  EXPECT_DOUBLE_EQ(*bf_bound_M(0.5, 1, 2, 1).linear(), 0.5 * std::pow(0.5, 15));
  EXPECT_NEAR(bf_bound_M(1.0 - 1e-12, 1, 2, 1).log2(), -1.0, 1e-9);
  EXPECT_THROW(bf_bound_M(1.0, 1, 2, 1), Error);
  EXPECT_THROW(bf_bound_M(0.5, 1, 4, 3), Error);
  EXPECT_LT(bf_bound_M(0.5, 3, 4, 1).log2(), bf_bound_M(0.5, 3, 4, 2).log2());
  EXPECT_LT(bf_bound_M(0.4, 3, 4, 1).log2(), bf_bound_M(0.5, 3, 4, 1).log2());
}

TEST(BruteForceBound, ChannelOrder) {
  EXPECT_EQ(*bf_bound_rand(1).linear(), 1.0);
  EXPECT_NEAR(*bf_bound_rand(10).linear(), 1.0 / 3628800.0, 1e-18);
  EXPECT_NEAR(*bf_bound_rand(64).linear() / 7.9e-90, 1.0, 0.01);
  EXPECT_LT(bf_bound_rand(65).log2(), bf_bound_rand(64).log2());
  EXPECT_THROW(bf_bound_rand(0), Error);
}

TEST(ReverseAnalysis, CifarGeometry) {
  const ReverseAnalysis r = augconv_reverse_analysis(3, 32, 32, 3, 1, 0.5);
  EXPECT_EQ(r.n_unknowns, 3072u + 27u);
  EXPECT_EQ(r.n_equations, 1024u);
  EXPECT_EQ(r.kappa_max, 3u);
  EXPECT_EQ(r.log2_leading, -6291456.0);
  // −1 + [(3072 − 1024)·3072 + 27 − 1]·log2(0.5)
  EXPECT_EQ(r.p_ar.log2(), -6291483.0);
  EXPECT_FALSE(r.solvable_configuration);
  EXPECT_FALSE(r.equations_cover_unknowns);
}

TEST(ReverseAnalysis, FlagTracksKappaBound) {
  for (std::size_t kappa : {1u, 2u, 3u, 4u, 6u, 8u}) {
    const ReverseAnalysis r = augconv_reverse_analysis(3, 32, 32, 3, kappa, 0.5);
    EXPECT_EQ(r.solvable_configuration, kappa > 3) << kappa;
    if (kappa > 3) {
      EXPECT_EQ(r.p_ar.log2(), 0.0);
    }
  }
  EXPECT_THROW(augconv_reverse_analysis(3, 32, 0, 3, 1, 0.5), Error);
  EXPECT_THROW(augconv_reverse_analysis(3, 32, 32, 3, 5, 0.5), Error);
}

namespace {
std::vector<std::pair<RowVector, RowVector>> make_pairs(const Matrix& mp, std::size_t kappa, std::size_t count,
                                                        SeededRng& rng) {
  std::vector<std::pair<RowVector, RowVector>> out;
  for (std::size_t i = 0; i < count; ++i) {
    RowVector d = mole::test::random_row(mp.rows() * kappa, rng);
    RowVector t = morph(d, mp, kappa);
    out.emplace_back(std::move(d), std::move(t));
  }
  return out;
}
}  // namespace

TEST(DtPair, RecoversCoreStrict) {
  SeededRng rng(6);
  for (std::size_t q : {4u, 16u, 64u}) {
    const Matrix mp = random_invertible(q, rng);
    const Matrix rec = dt_pair_attack(make_pairs(mp, 1, q, rng), q, 1);
    EXPECT_LE(relative_max_error(rec, mp), q == 4 ? 1e-8 : 1e-6) << q;
  }
}

TEST(DtPair, SegmentModeUsesFewerPairs) {
  SeededRng rng(7);
  const std::size_t q = 12, kappa = 4;
  const Matrix mp = random_invertible(q, rng);
  EXPECT_EQ(pairs_required(q, kappa, PairMode::Segment), 3u);
  EXPECT_EQ(pairs_required(q, kappa, PairMode::Strict), 12u);
  const auto pairs = make_pairs(mp, kappa, 3, rng);
  EXPECT_LE(relative_max_error(dt_pair_attack(pairs, q, kappa, PairMode::Segment), mp), 1e-6);
  EXPECT_THROW(dt_pair_attack(pairs, q, kappa, PairMode::Strict), Error);
  EXPECT_EQ(pairs_required(3072, 1, PairMode::Strict), 3072u);
}

TEST(DtPair, FailureModes) {
  SeededRng rng(8);
  const Matrix mp = random_invertible(4, rng);
  try {
    dt_pair_attack(make_pairs(mp, 1, 3, rng), 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientPairs);
  }
  auto pairs = make_pairs(mp, 1, 4, rng);
  pairs[3] = pairs[1];
  try {
    dt_pair_attack(pairs, 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RankDeficient);
  }
  auto bad = make_pairs(mp, 1, 4, rng);
  bad[0].second = RowVector(5);
  EXPECT_THROW(dt_pair_attack(bad, 4, 1), Error);
}

TEST(BruteForceRecover, ExactGuessAndScaledGuess) {
  SeededRng rng(9);
  const std::size_t q = 8;
  const Matrix m = random_invertible(q, rng);
  const RowVector d = unit_l2_normalize(mole::test::random_row(q, rng));
  const RowVector t = row_times(d, m);
  const RecoveryReport exact = brute_force_recover(t, m, d, 0.01);
  EXPECT_LE(exact.e_rms, 1e-12);
  EXPECT_TRUE(exact.success);
  EXPECT_DOUBLE_EQ(exact.sigma_threshold, 0.01 / std::sqrt(8.0));

  Matrix m2 = m;
  for (double& v : m2.data()) v *= 2.0;
  const RecoveryReport half = brute_force_recover(t, m2, d, 0.5);
  for (std::size_t i = 0; i < q; ++i) EXPECT_NEAR(half.recovered[i], d[i] / 2.0, 1e-12);
  // ||d/2 − d|| = 1/2 for a unit d, so E_rms = 0.5/√q
  EXPECT_NEAR(half.e_rms, 0.5 / std::sqrt(8.0), 1e-12);
  EXPECT_EQ(half.success, half.e_rms <= 0.5 / std::sqrt(8.0));
}

TEST(BruteForceRecover, Errors) {
  const RowVector t{1, 2};
  EXPECT_THROW(brute_force_recover(t, Matrix{{1, 2}, {2, 4}}, t, 0.5), Error);
  EXPECT_THROW(brute_force_recover(t, Matrix::identity(3), t, 0.5), Error);
  EXPECT_THROW(brute_force_recover(t, Matrix::identity(2), t, 1.5), Error);
}

// Guessing succeeds when the recovered q-vector lands near D^r, an event in
// q dimensions. The bound over the q² core entries does not cover it.
TEST(BruteForceRecover, DataLevelSuccessExceedsCoreBound) {
  SeededRng rng(10);
  const MonteCarloResult r = brute_force_montecarlo(4, 0.5, 20000, rng);
  const double core_bound = *bf_bound_M(0.5, 1, 2, 1).linear();
  EXPECT_NEAR(core_bound, std::ldexp(1.0, -16), 1e-20);
  EXPECT_GT(r.fraction(), core_bound + 5.0 * r.std_error(core_bound));
}

TEST(BruteForceRecover, DataLevelSuccessWithinVectorCapBound) {
  for (std::size_t q : {2u, 4u, 8u}) {
    SeededRng rng(11 + q);
    const MonteCarloResult r = brute_force_montecarlo(q, 0.5, 10000, rng);
    const double cap = *lemma1_bound(q, 0.5).linear();
    EXPECT_LE(r.fraction(), cap + 3.0 * r.std_error(cap)) << "q=" << q;
  }
}

TEST(Erms, Examples) {
  EXPECT_EQ(erms(RowVector{1, 2}, RowVector{1, 2}), 0.0);
  EXPECT_DOUBLE_EQ(erms(RowVector{0, 0}, RowVector{3, 4}), std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(erms(RowVector{1, 5, 2}, RowVector{0, 1, 2}), erms(RowVector{2, 1, 5}, RowVector{2, 0, 1}));
  EXPECT_THROW(erms(RowVector{1}, RowVector{1, 2}), Error);
  SeededRng rng(11);
  const RowVector a = mole::test::random_row(10, rng), b = mole::test::random_row(10, rng);
  double sse = 0.0;
  for (std::size_t i = 0; i < 10; ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(erms(a, b) * erms(a, b) * 10.0, sse, 1e-14);
}
