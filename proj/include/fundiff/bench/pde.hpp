#pragma once

// Periodic Gaussian random fields and a finite-difference viscous Burgers solver.

#include <numbers>

#include <fundiff/fae/function_sample.hpp>

namespace fundiff::bench {

using fae::FunctionSample;
using fae::Interval;

/// Mode variances w_k, k = 0..K-1, proportional to (4 pi^2 k^2 + tau^2)^(-alpha)
/// and scaled so the marginal variance sum_k w_k is one.
inline std::vector<double> grf_weights(std::size_t K, double tau = 5.0, double alpha = 4.0) {
  std::vector<double> w(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double kk = static_cast<double>(k);
    total += w[k] = std::pow(4.0 * std::numbers::pi * std::numbers::pi * kk * kk + tau * tau, -alpha);
  }
  if (total > 0.0)
    for (double& v : w) v /= total;
  return w;
}

namespace detail {

/// Endpoint-inclusive sampling for any point count >= 2.
inline FunctionSample grf_closed(std::size_t grid, const std::vector<double>& weights, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<double> xi(weights.size()), eta(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    xi[k] = g(rng);
    eta[k] = g(rng);
  }
  Tensor v({grid, 1});
  for (std::size_t j = 0; j < grid; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(grid - 1);
    double s = weights.empty() ? 0.0 : std::sqrt(weights[0]) * xi[0];
    for (std::size_t k = 1; k < weights.size(); ++k) {
      const double arg = 2.0 * std::numbers::pi * static_cast<double>(k) * x;
      s += std::sqrt(weights[k]) * (xi[k] * std::cos(arg) + eta[k] * std::sin(arg));
    }
    v[j] = s;
  }
  // Pin the duplicate endpoint to the exact periodic value.
  v[grid - 1] = v[0];
  return fae::make_sample({grid}, {Interval{0.0, 1.0}}, 1, std::move(v));
}

}  // namespace detail

/// u(x) = sqrt(w_0) xi_0 + sum_k sqrt(w_k) (xi_k cos 2 pi k x + eta_k sin 2 pi k x) on the
/// endpoint-inclusive grid over [0,1], so u(0) = u(1). Pointwise variance is sum_k w_k.
inline FunctionSample grf_periodic_1d(std::size_t grid, const std::vector<double>& weights, Rng& rng) {
  if (grid < 2 || grid % 2 != 0) throw ConfigError("GRF grid must be even, got " + std::to_string(grid));
  return detail::grf_closed(grid, weights, rng);
}

/// Burgers initial condition on nx + 1 endpoint-inclusive points (nx periodic cells).
inline FunctionSample grf_initial_condition(std::size_t nx, const std::vector<double>& weights, Rng& rng) {
  if (nx < 2 || nx % 2 != 0) throw ConfigError("GRF cell count must be even, got " + std::to_string(nx));
  return detail::grf_closed(nx + 1, weights, rng);
}

struct BurgersConfig {
  double nu = 0.01;
  std::size_t nx = 256;     // periodic cells on [0,1)
  std::size_t nt = 2048;    // RK4 steps
  double T = 1.0;
  std::size_t save_x = 0;   // output x points incl. x = 1; 0 -> nx + 1
  std::size_t save_t = 0;   // output times incl. 0 and T; 0 -> nt + 1
};

/// Right-hand side -d/dx(u^2/2) + nu u_xx with second-order central differences.
inline void burgers_rhs(const std::vector<double>& u, double nu, double h, std::vector<double>& out) {
  const std::size_t n = u.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double l = u[(j + n - 1) % n], r = u[(j + 1) % n];
    out[j] = -(r * r - l * l) / (4.0 * h) + nu * (r - 2.0 * u[j] + l) / (h * h);
  }
}

/// Largest stable RK4 step estimate for the central scheme.
inline double burgers_max_dt(double umax, double nu, double h) {
  // RK4 covers |z| <= 2.78 on the negative real axis and 2.82 on the imaginary axis.
  return 1.0 / (4.0 * nu / (h * h) / 2.78 + umax / h / 2.82);
}

/// Solves u_t + u u_x = nu u_xx on the periodic unit interval from `a`, given at
/// nx + 1 endpoint-inclusive points. Output grid is (x, t) over [0,1] x [0,T].
inline FunctionSample burgers_fd_solve(const FunctionSample& a, const BurgersConfig& c) {
  a.validate();
  if (!(c.nu > 0.0)) throw ConfigError("viscosity must be positive");
  if (a.spatial_rank() != 1 || a.channels != 1 || a.grid_shape[0] != c.nx + 1)
    throw ShapeError("initial condition must be 1D with nx + 1 = " + std::to_string(c.nx + 1) + " points, got " +
                     shape_str(a.grid_shape));
  const std::size_t sx = c.save_x ? c.save_x : c.nx + 1, st = c.save_t ? c.save_t : c.nt + 1;
  if (sx < 2 || c.nx % (sx - 1) != 0) throw ConfigError("save_x - 1 must divide nx");
  if (st < 2 || c.nt % (st - 1) != 0) throw ConfigError("save_t - 1 must divide nt");
  const double h = 1.0 / static_cast<double>(c.nx), dt = c.T / static_cast<double>(c.nt);
  std::vector<double> u(a.values.data().begin(), a.values.data().begin() + static_cast<std::ptrdiff_t>(c.nx));
  double umax = 0.0;
  for (double v : u) umax = std::max(umax, std::abs(v));
  const double dt_max = burgers_max_dt(umax, c.nu, h);
  if (dt > dt_max)
    throw ConfigError("CFL violated: dt = " + std::to_string(dt) + " exceeds " + std::to_string(dt_max) +
                      "; use nt >= " + std::to_string(static_cast<std::size_t>(std::ceil(c.T / dt_max))));

  Tensor out({sx, st, 1});
  const std::size_t xstride = c.nx / (sx - 1), tstride = c.nt / (st - 1);
  auto save = [&](std::size_t ti) {
    for (std::size_t i = 0; i < sx; ++i) out[i * st + ti] = u[(i * xstride) % c.nx];
  };
  save(0);
  const std::size_t n = c.nx;
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (std::size_t step = 1; step <= c.nt; ++step) {
    burgers_rhs(u, c.nu, h, k1);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + 0.5 * dt * k1[j];
    burgers_rhs(tmp, c.nu, h, k2);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + 0.5 * dt * k2[j];
    burgers_rhs(tmp, c.nu, h, k3);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + dt * k3[j];
    burgers_rhs(tmp, c.nu, h, k4);
    for (std::size_t j = 0; j < n; ++j) u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    if (step % tstride == 0) save(step / tstride);
  }
  for (double v : out.data())
    if (!std::isfinite(v)) throw NonFiniteError("Burgers solution diverged");
  return fae::make_sample({sx, st}, {Interval{0.0, 1.0}, Interval{0.0, c.T}}, 1, std::move(out));
}

/// Mass int u(x, t) dx at each saved time (periodic trapezoid: skip the duplicate endpoint).
inline std::vector<double> burgers_mass(const FunctionSample& sol) {
  const std::size_t sx = sol.grid_shape[0], st = sol.grid_shape[1];
  std::vector<double> m(st, 0.0);
  for (std::size_t t = 0; t < st; ++t)
    for (std::size_t i = 0; i + 1 < sx; ++i) m[t] += sol.values[i * st + t] / static_cast<double>(sx - 1);
  return m;
}

}  // namespace fundiff::bench
