#include <gtest/gtest.h>

#include <fundiff/bench/metrics.hpp>
#include <fundiff/bench/pde.hpp>

using namespace fundiff;
using namespace fundiff::bench;
using std::numbers::pi;

TEST(DampedSinusoid, FormulaOnGrid) {
  Rng rng = make_rng(1);
  const DampedData d = gen_damped_sinusoid(256, 128, rng);
  ASSERT_EQ(d.data.size(), 256u);
  const DampedRanges r;
  for (std::size_t i = 0; i < 256; ++i) {
    const auto& p = d.params[i];
    EXPECT_TRUE(r.A.contains(p.A) && r.gamma.contains(p.gamma) && r.omega.contains(p.omega) && r.b.contains(p.b));
    EXPECT_EQ(d.data.values[i][0], p.b);
    EXPECT_DOUBLE_EQ(d.data.values[i][127], p(1.0));
  }
  const FunctionSample f = damped_sample({1.0, 0.0, 2 * pi, 0.0}, 5);
  EXPECT_NEAR(f.values[1], 1.0, 1e-15);
}

TEST(DampedFit, NoiselessRoundtrip) {
  const FitResult r = fit_damped_params(damped_sample({0.75, 3.0, 7 * pi, 0.0}, 128));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.params.A, 0.75, 1e-6);
  EXPECT_NEAR(r.params.gamma, 3.0, 1e-6);
  EXPECT_NEAR(r.params.omega, 7 * pi, 1e-6);
  EXPECT_NEAR(r.params.b, 0.0, 1e-6);
  EXPECT_LT(r.mse, 1e-12);
}

TEST(DampedFit, RandomDrawsRecovered) {
  Rng rng = make_rng(2);
  const DampedData d = gen_damped_sinusoid(100, 128, rng);
  for (std::size_t i = 0; i < 100; ++i) {
    const FitResult r = fit_damped_params(d.data.sample(i));
    const auto p = r.params.as_array(), t = d.params[i].as_array();
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(p[k], t[k], 1e-6) << "sample " << i << " param " << k;
  }
}

TEST(DampedFit, NoiseFloorAndOffsetOnly) {
  Rng rng = make_rng(3);
  FunctionSample f = damped_sample({0.8, 2.5, 6.5 * pi, 0.1}, 128);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& v : f.values.data()) v += noise(rng);
  const double mse = fit_damped_params(f).mse;
  EXPECT_GT(mse, 0.5e-4);
  EXPECT_LT(mse, 2e-4);
  const FitResult c = fit_damped_params(damped_sample({1e-9, 3.0, 7 * pi, 0.3}, 128));
  EXPECT_NEAR(c.params.b, 0.3, 1e-3);
}

TEST(Grf, PeriodicZeroAndDeterministic) {
  const auto w = grf_weights(32);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-14);
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng a = make_rng(s), b = make_rng(s);
    const FunctionSample f = grf_periodic_1d(64, w, a);
    EXPECT_NEAR(f.values[0], f.values[63], 1e-12);
    EXPECT_EQ(f.values, grf_periodic_1d(64, w, b).values);
  }
  Rng rng = make_rng(4);
  const FunctionSample z = grf_periodic_1d(64, std::vector<double>(32, 0.0), rng);
  EXPECT_EQ(max_abs(z.values), 0.0);
  EXPECT_THROW(grf_periodic_1d(63, w, rng), ConfigError);
}

TEST(Grf, PointwiseVarianceMatchesWeights) {
  std::vector<double> w = grf_weights(16, 2.0, 1.0);
  for (double& v : w) v *= 2.5;
  Rng rng = make_rng(5);
  double s = 0, s2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double v = grf_periodic_1d(32, w, rng).values[7];
    s += v;
    s2 += v * v;
  }
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / 2.5, 1.0, 0.05);
}

namespace {

FunctionSample smooth_ic(std::size_t nx) {
  Tensor v({nx + 1, 1});
  for (std::size_t j = 0; j <= nx; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(nx);
    v[j] = 0.5 * std::sin(2 * pi * x) + 0.2 * std::cos(4 * pi * x) + 0.3;
  }
  v[nx] = v[0];
  return fae::make_sample({nx + 1}, {Interval{0, 1}}, 1, v);
}

}  // namespace

TEST(Burgers, ConstantStateIsFixedPoint) {
  const std::size_t nx = 32;
  const FunctionSample a = fae::make_sample({nx + 1}, {Interval{0, 1}}, 1, Tensor({nx + 1, 1}, 0.7));
  const FunctionSample u = burgers_fd_solve(a, {0.01, nx, 200, 1.0});
  for (double v : u.values.data()) EXPECT_NEAR(v, 0.7, 1e-14);
  EXPECT_EQ(u.grid_shape, (Shape{nx + 1, 201}));
}

TEST(Burgers, MassConserved) {
  const FunctionSample u = burgers_fd_solve(smooth_ic(128), {0.01, 128, 2000, 0.5});
  const auto m = burgers_mass(u);
  for (double v : m) EXPECT_LT(std::abs(v - m[0]) / std::abs(m[0]), 1e-6);
}

TEST(Burgers, SecondOrderSelfConvergence) {
  // Errors against a 4x refined reference at the shared coarse points.
  auto solve = [](std::size_t nx) { return burgers_fd_solve(smooth_ic(nx), {0.02, nx, 64 * nx, 0.25, 17, 2}); };
  const FunctionSample ref = solve(512);
  std::vector<double> err;
  for (std::size_t nx : {32u, 64u, 128u}) {
    const FunctionSample u = solve(nx);
    double e = 0;
    for (std::size_t i = 0; i < 17; ++i) e = std::max(e, std::abs(u.values[i * 2 + 1] - ref.values[i * 2 + 1]));
    err.push_back(e);
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
  EXPECT_NEAR(std::log2(err[1] / err[2]), 2.0, 0.3);
}

TEST(Burgers, CflViolationSuggestsSteps) {
  try {
    burgers_fd_solve(smooth_ic(256), {0.01, 256, 10, 1.0});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("use nt >="), std::string::npos);
  }
  EXPECT_THROW(burgers_fd_solve(smooth_ic(32), {0.0, 32, 100, 1.0}), ConfigError);
}

TEST(RelL2, Examples) {
  Rng rng = make_rng(6);
  FunctionSample r = fae::make_sample({64}, {Interval{0, 1}}, 1, randn({64, 1}, rng));
  EXPECT_EQ(rel_l2(r, r), 0.0);
  FunctionSample p = r;
  for (double& v : p.values.data()) v *= 2;
  EXPECT_DOUBLE_EQ(rel_l2(p, r), 1.0);
  // e orthogonal to r with ||e|| = 0.1 ||r||.
  Tensor e = randn({64, 1}, rng);
  double er = 0, rr = 0;
  for (std::size_t i = 0; i < 64; ++i) er += e[i] * r.values[i], rr += r.values[i] * r.values[i];
  for (std::size_t i = 0; i < 64; ++i) e[i] -= er / rr * r.values[i];
  double ee = 0;
  for (std::size_t i = 0; i < 64; ++i) ee += e[i] * e[i];
  for (std::size_t i = 0; i < 64; ++i) p.values[i] = r.values[i] + 0.1 * std::sqrt(rr / ee) * e[i];
  EXPECT_NEAR(rel_l2(p, r), 0.1, 1e-14);
  FunctionSample q = r, s = p;
  for (double& v : q.values.data()) v *= -3.5;
  for (double& v : s.values.data()) v *= -3.5;
  EXPECT_NEAR(rel_l2(s, q), rel_l2(p, r), 1e-14);
  EXPECT_THROW(rel_l2(r, fae::make_sample({64}, {Interval{0, 1}}, 1, Tensor({64, 1}))), ConfigError);
}

TEST(EnergySpectrum, SingleModeParsevalAndZero) {
  const std::size_t N = 32;
  Tensor v({N, N, 1});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) v[i * N + j] = std::sin(4 * 2 * pi * static_cast<double>(j) / N);
  const auto E = energy_spectrum(fae::make_sample({N, N}, {Interval{0, 1}, Interval{0, 1}}, 1, v));
  const double peak = E.at(4);
  for (std::size_t k = 0; k < E.size(); ++k)
    if (k != 4) {
      EXPECT_LT(E[k], 1e-10 * peak);
    }
  EXPECT_NEAR(peak, 0.25, 1e-12);

  Rng rng = make_rng(7);
  const FunctionSample w = fae::make_sample({N, N}, {Interval{0, 1}, Interval{0, 1}}, 2, randn({N, N, 2}, rng));
  const auto Ew = energy_spectrum(w);
  double total = 0;
  for (double x : w.values.data()) total += 0.5 * x * x / (N * N);
  EXPECT_NEAR(std::accumulate(Ew.begin(), Ew.end(), 0.0) / total, 1.0, 1e-8);

  const auto Ez = energy_spectrum(fae::make_sample({N, N}, {Interval{0, 1}, Interval{0, 1}}, 1, Tensor({N, N, 1})));
  for (double x : Ez) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(energy_spectrum(fae::make_sample({N, 16}, {Interval{0, 1}, Interval{0, 1}}, 1, Tensor({N, 16, 1}))), ShapeError);
}

TEST(EvalDamped, ReportOnCleanData) {
  Rng rng = make_rng(8);
  const DampedData d = gen_damped_sinusoid(20, 128, rng);
  const MetricsReport r = eval_damped(d.data);
  EXPECT_EQ(r.count, 20u);
  for (double f : r.in_range) EXPECT_EQ(f, 1.0);
  EXPECT_LT(r.median_mse, 1e-12);
  EXPECT_LT(r.rel_l2, 1e-6);
  const std::string csv = histograms_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 30);
  EXPECT_NE(histograms_svg(r).find("<svg"), std::string::npos);
  fae::Dataset empty;
  EXPECT_THROW(
      try { eval_damped(empty); } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("empty input"), std::string::npos);
        throw;
      },
      ConfigError);
}
