#include <gtest/gtest.h>

#include <fundiff/theory/audit.hpp>
#include <fundiff/theory/barron.hpp>

using namespace fundiff;
using namespace fundiff::theory;

TEST(EigenDecay, ReferenceValuesAndMonotone) {
  EXPECT_DOUBLE_EQ(eigen_decay(RKHSSpec::polynomial(1.0), 2), 0.25);
  EXPECT_NEAR(eigen_decay(RKHSSpec::exponential(1.0, 1.0), 2), 0.1353352832366127, 1e-15);
  Rng rng = make_rng(1);
  for (int t = 0; t < 20; ++t) {
    RKHSSpec s = t % 2 ? RKHSSpec::exponential(std::uniform_real_distribution<>(0.2, 2)(rng), std::uniform_real_distribution<>(0.1, 3)(rng))
                       : RKHSSpec::polynomial(std::uniform_real_distribution<>(0.2, 3)(rng));
    s.c_H = 0.5;
    s.C_H = 2.0;
    for (std::size_t i = 1; i < 100; ++i) EXPECT_GE(eigen_decay(s, i), eigen_decay(s, i + 1));
  }
}

TEST(Basis, OrthonormalUnderQuadrature) {
  const auto x = unit_grid(4096);
  for (std::size_t i = 1; i <= 16; ++i)
    for (std::size_t j = 1; j <= 16; ++j) {
      double g = 0;
      for (double xi : x) g += basis(i, xi) * basis(j, xi);
      EXPECT_NEAR(g / 4096.0, i == j ? 1.0 : 0.0, 1e-6);
    }
}

TEST(RkhsBall, ConstraintDeterminismAndOneDimensionalMean) {
  for (auto law : {BallLaw::uniform, BallLaw::sparse, BallLaw::two_cluster}) {
    Rng a = make_rng(2), b = make_rng(2);
    const Tensor t = sample_rkhs_ball(RKHSSpec::polynomial(1), 500, a, law);
    EXPECT_EQ(t, sample_rkhs_ball(RKHSSpec::polynomial(1), 500, b, law));
    for (std::size_t r = 0; r < 500; ++r) EXPECT_LE(euclidean(row(t, r), std::vector<double>(64, 0.0)), 1.0);
  }
  Rng rng = make_rng(3);
  const Tensor t = sample_rkhs_ball(RKHSSpec::polynomial(1, 1), 10000, rng);
  double mean = 0;
  for (double v : t.data()) {
    EXPECT_LE(std::abs(v), 1.0);
    mean += v / 10000;
  }
  // Uniform on [-1,1]: sd of the mean is 1/sqrt(3e4).
  EXPECT_LT(std::abs(mean), 3.0 / std::sqrt(30000.0));
}

TEST(Truncation, ExactTailAndBound) {
  const RKHSSpec s = RKHSSpec::polynomial(1.0);
  const auto grid = unit_grid(256);
  Rng rng = make_rng(4);
  const Tensor th = sample_rkhs_ball(s, 50, rng);
  for (double e : reconstruction_errors(th, s, 64, grid)) EXPECT_EQ(e, 0.0);
  for (std::size_t D : {1u, 4u, 10u}) {
    Tensor e({1, 64});
    e[D] = 1.0;
    EXPECT_NEAR(reconstruction_errors(e, s, D, grid)[0], std::sqrt(eigen_decay(s, D + 1)), 1e-14);
  }
  // Tail sum in closed form against the quadrature.
  const auto err = reconstruction_errors(th, s, 4, grid);
  for (std::size_t r = 0; r < 50; ++r) {
    double tail = 0;
    for (std::size_t i = 4; i < 64; ++i) tail += th.at(r, i) * th.at(r, i) * eigen_decay(s, i + 1);
    EXPECT_NEAR(err[r], std::sqrt(tail), 1e-12);
    EXPECT_LE(err[r], 0.2);
  }
  for (std::size_t D = 1; D < 64; D += 7)
    for (double v : reconstruction_errors(th, s, D, grid)) EXPECT_LE(v, std::sqrt(eigen_decay(s, D + 1)) + 1e-12);
  EXPECT_THROW(truncation_encode(th, 65), ConfigError);
}

TEST(DecoderLipschitz, EigendirectionsAndAudit) {
  const RKHSSpec s = RKHSSpec::polynomial(1.0);
  const auto grid = unit_grid(256);
  for (std::size_t i : {1u, 8u}) {
    Tensor a({1, 8}), b({1, 8});
    a[i - 1] = 0.3;
    b[i - 1] = -0.2;
    const Tensor fa = rkhs_decode(a, s, grid), fb = rkhs_decode(b, s, grid);
    EXPECT_NEAR(l2_distance(row(fa, 0), row(fb, 0)) / 0.5, std::sqrt(eigen_decay(s, i)), 1e-14);
  }
  Rng rng = make_rng(5);
  EXPECT_LE(decoder_lipschitz_audit(s, 8, 10000, rng), 1.0 + 1e-12);
}

TEST(ExactW1, SmallCases) {
  const Tensor A = Tensor::matrix(2, 1, {0, 1}), B = Tensor::matrix(2, 1, {0.5, 1.5});
  EXPECT_DOUBLE_EQ(w1_exact_small(A, B), 0.5);
  EXPECT_DOUBLE_EQ(w1_exact_small(Tensor::matrix(1, 1, {0}), Tensor::matrix(1, 1, {2.5})), 2.5);
  EXPECT_EQ(w1_exact_small(A, A), 0.0);
  EXPECT_THROW(w1_exact_small(A, Tensor::matrix(3, 1, {0, 1, 2})), ShapeError);
}

TEST(ExactW1, MatchesBruteForcePermutations) {
  Rng rng = make_rng(6);
  for (int t = 0; t < 30; ++t) {
    const Tensor A = randn({6, 3}, rng), B = randn({6, 3}, rng);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = 1e300;
    do {
      double c = 0;
      for (std::size_t i = 0; i < 6; ++i) c += euclidean(row(A, i), row(B, perm[i]));
      best = std::min(best, c / 6);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(w1_exact_small(A, B), best, 1e-12);
  }
}

TEST(ExactW1, MetricAxioms) {
  Rng rng = make_rng(7);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 15;
    const Tensor A = randn({n, 2}, rng), B = randn({n, 2}, rng), C = randn({n, 2}, rng);
    const double ab = w1_exact_small(A, B), ba = w1_exact_small(B, A);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GT(ab, 0.0);
    EXPECT_LE(ab, w1_exact_small(A, C) + w1_exact_small(C, B) + 1e-12);
    // Row permutation leaves the multiset unchanged.
    Tensor P = A;
    std::swap_ranges(P.ptr(), P.ptr() + 2, P.ptr() + 2 * (n - 1));
    EXPECT_EQ(w1_exact_small(A, P), 0.0);
  }
}

TEST(SlicedW1, OneDimensionalIdentityAndZero) {
  Rng rng = make_rng(8);
  for (int t = 0; t < 10; ++t) {
    const Tensor A = randn({40, 1}, rng), B = randn({40, 1}, rng);
    EXPECT_NEAR(sliced_w1(A, B, 3, rng), w1_exact_small(A, B), 1e-12);
  }
  const Tensor X = randn({30, 8}, rng);
  EXPECT_EQ(sliced_w1(X, X, 64, rng), 0.0);
  // Unequal counts through the CDF integral: {0} vs {0, 1} -> 0.5.
  EXPECT_DOUBLE_EQ(w1_1d({0.0}, {0.0, 1.0}), 0.5);
}

TEST(SlicedW1, CloseToExactInTwoDimensions) {
  Rng rng = make_rng(9);
  // Projection never increases the matched cost, so the normalized surrogate
  // sits below the exact value; single draws can dip slightly past 25%.
  double mean_ratio = 0;
  for (int t = 0; t < 20; ++t) {
    const Tensor A = randn({8, 2}, rng), B = randn({8, 2}, rng);
    const double exact = w1_exact_small(A, B), sliced = sliced_w1(A, B, 512, rng);
    EXPECT_LE(sliced, exact + 1e-12);
    EXPECT_GT(sliced / exact, 0.6);
    mean_ratio += sliced / exact / 20;
  }
  EXPECT_NEAR(mean_ratio, 1.0, 0.25);
}

TEST(SlicedW1, TranslationGivesShiftNorm) {
  Rng rng = make_rng(10);
  const Tensor A = randn({100, 5}, rng);
  Tensor B = A;
  for (std::size_t i = 0; i < 100; ++i) B.at(i, 2) += 0.7;
  EXPECT_NEAR(sliced_w1(A, B, 20000, rng), 0.7, 0.02);
}

TEST(Decomposition, PerfectOracleAndLosslessAutoencoder) {
  Rng rng = make_rng(11);
  AuditConfig c{RKHSSpec::polynomial(1.0), 4, 64};
  c.oracle = Oracle::perfect;
  AuditReport r = decomposition_audit(c, rng);
  EXPECT_EQ(r.latent_w1, 0.0);
  EXPECT_TRUE(r.holds);
  EXPECT_LE(r.lhs, r.recon_term + r.mc_halfwidth);
  c.oracle = Oracle::empirical;
  c.D = 64;
  r = decomposition_audit(c, rng);
  EXPECT_EQ(r.recon_term, 0.0);
  EXPECT_LE(r.lhs, r.lip_term + 1e-12);
}

TEST(Decomposition, HoldsAcrossSeededTrials) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng = make_rng(12, {t});
    const AuditReport r = decomposition_audit({RKHSSpec::polynomial(1.0), 4, 128}, rng);
    EXPECT_TRUE(r.holds);
    EXPECT_TRUE(r.recon_within_bound);
  }
}

TEST(OptimalLatentDim, FormulaValues) {
  EXPECT_EQ(optimal_latent_dim(1000000, RKHSSpec::polynomial(1.0)), 6u);
  EXPECT_EQ(optimal_latent_dim(static_cast<std::size_t>(std::exp(10.0)) + 1, RKHSSpec::exponential(1.0, 2.0)), 4u);
  std::size_t prev = 1000;
  for (double beta : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const std::size_t d = optimal_latent_dim(4096, RKHSSpec::polynomial(beta));
    EXPECT_LE(d, prev);
    prev = d;
  }
  EXPECT_THROW(optimal_latent_dim(15, RKHSSpec::polynomial(1.0)), ConfigError);
}

TEST(RateSweep, SingleRowAndReferenceColumns) {
  const auto rows = rate_sweep(RKHSSpec::polynomial(1.0), {16}, 3, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(std::isfinite(rows[0].w1_mean) && std::isfinite(rows[0].w1_std) && std::isfinite(rows[0].lower_rate_ref));
  const double ln = std::log(16.0);
  EXPECT_DOUBLE_EQ(rows[0].upper_rate_ref, std::log(ln) / ln);
  EXPECT_DOUBLE_EQ(rows[0].lower_rate_ref, 1.0 / ln);
  EXPECT_THROW(rate_sweep(RKHSSpec::polynomial(1.0), {64, 16}, 1, 1), ConfigError);
}

TEST(RateSweep, DoublingNDoesNotRaiseW1) {
  const auto rows = rate_sweep(RKHSSpec::polynomial(1.0), {32, 64}, 10, 2);
  const double pooled = std::sqrt(0.5 * (rows[0].w1_std * rows[0].w1_std + rows[1].w1_std * rows[1].w1_std));
  EXPECT_LE(rows[1].w1_mean, rows[0].w1_mean + pooled);
}

TEST(Barron, PathNormExamples) {
  BarronNetParams one{1, 2, {1.0}, {1.0, 0.0}, {0.0}};
  EXPECT_DOUBLE_EQ(path_norm(one), 1.0);
  BarronNetParams two{2, 2, {0.5, -0.5}, {0.5, -0.5, 0.0, 1.0}, {0.0, 0.5}};
  EXPECT_DOUBLE_EQ(path_norm(two), 1.25);
  BarronNetParams three = two;
  for (double& a : three.a) a *= 3;
  EXPECT_DOUBLE_EQ(path_norm(three), 3 * path_norm(two));
}

TEST(Barron, EvaluationExamples) {
  BarronNetParams p{1, 3, {1.0}, {1.0, 0.0, 0.0}, {0.0}};
  EXPECT_DOUBLE_EQ(two_layer_relu_eval(p, std::vector<double>{0.5, 0, 0}), 0.5);
  BarronNetParams dead{1, 3, {1.0}, {-1.0, 0.0, 0.0}, {-0.1}};
  Rng rng = make_rng(13);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x{std::uniform_real_distribution<>()(rng), 0.3, 0.7};
    EXPECT_EQ(two_layer_relu_eval(dead, x), 0.0);
  }
}

TEST(Barron, BoundChecks) {
  BarronNetParams bad{2, 2, {1.5, 0.0}, {1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}};
  EXPECT_THROW(check_bounds(bad), ConfigError);
  EXPECT_FALSE(check_bounds(bad, BoundMode::audit));
  Rng rng = make_rng(14);
  EXPECT_TRUE(check_bounds(random_valid_params(16, 4, rng)));
}

TEST(Barron, LipschitzLemmaAudit) {
  Rng rng = make_rng(15);
  EXPECT_DOUBLE_EQ(lipschitz_constant(16, 4), 1.5);
  const BarronAuditReport r = barron_lipschitz_audit(4, 16, 200, rng);
  EXPECT_EQ(r.holds, r.pairs);
  EXPECT_LE(r.max_ratio, 1.0);
}
