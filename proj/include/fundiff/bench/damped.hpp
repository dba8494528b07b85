#pragma once

// Damped sinusoids f(x) = A exp(-g x) sin(w x) + b on [0,1] and their
// multi-start Levenberg-Marquardt fit.

#include <numbers>

#include <Eigen/Dense>

#include <fundiff/fae/function_sample.hpp>

namespace fundiff::bench {

using fae::Dataset;
using fae::FunctionSample;
using fae::Interval;

struct DampedSinusoidParams {
  double A = 0.0, gamma = 0.0, omega = 0.0, b = 0.0;

  double operator()(double x) const { return A * std::exp(-gamma * x) * std::sin(omega * x) + b; }
  std::array<double, 4> as_array() const { return {A, gamma, omega, b}; }
};

struct Range {
  double lo = 0.0, hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  /// Same centre, width scaled by (1 + frac).
  Range widened(double frac) const {
    const double pad = 0.5 * frac * (hi - lo);
    return {lo - pad, hi + pad};
  }
};

struct DampedRanges {
  Range A{0.5, 1.0};
  Range gamma{2.0, 4.0};
  Range omega{6.0 * std::numbers::pi, 8.0 * std::numbers::pi};
  Range b{-0.5, 0.5};

  std::array<Range, 4> as_array() const { return {A, gamma, omega, b}; }
};

inline constexpr std::array<const char*, 4> kDampedParamNames{"A", "gamma", "omega", "b"};

/// Endpoint-inclusive grid on [0,1].
inline std::vector<double> closed_grid(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<double>(j) / static_cast<double>(n - 1);
  return x;
}

inline FunctionSample damped_sample(const DampedSinusoidParams& p, std::size_t grid) {
  if (grid < 2) throw ConfigError("damped sinusoid grid needs at least 2 points");
  const auto x = closed_grid(grid);
  Tensor v({grid, 1});
  for (std::size_t j = 0; j < grid; ++j) v[j] = p(x[j]);
  return fae::make_sample({grid}, {Interval{0.0, 1.0}}, 1, std::move(v));
}

struct DampedData {
  Dataset data;
  std::vector<DampedSinusoidParams> params;
};

inline DampedData gen_damped_sinusoid(std::size_t n, std::size_t grid, Rng& rng, const DampedRanges& r = {}) {
  DampedData out;
  auto u = [&rng](const Range& q) { return std::uniform_real_distribution<double>(q.lo, q.hi)(rng); };
  for (std::size_t i = 0; i < n; ++i) {
    DampedSinusoidParams p;
    p.A = u(r.A);
    p.gamma = u(r.gamma);
    p.omega = u(r.omega);
    p.b = u(r.b);
    out.data.push(damped_sample(p, grid));
    out.params.push_back(p);
  }
  if (n == 0) {
    out.data.grid_shape = {grid};
    out.data.domain = {Interval{0.0, 1.0}};
  }
  io::json ps = io::json::array();
  for (const auto& p : out.params) ps.push_back({p.A, p.gamma, p.omega, p.b});
  out.data.extra = {{"kind", "damped_sinusoid"}, {"params", ps}};
  return out;
}

struct FitResult {
  DampedSinusoidParams params;
  double mse = 0.0;
  bool converged = false;
};

struct FitConfig {
  Range omega_window{5.0 * std::numbers::pi, 9.0 * std::numbers::pi};
  std::size_t omega_starts = 8;
  std::array<double, 3> gamma_starts{2.0, 3.0, 4.0};
  std::size_t max_iters = 200;
};

namespace detail {

inline double sse(const DampedSinusoidParams& p, const std::vector<double>& x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += std::pow(p(x[j]) - y[j], 2);
  return s;
}

/// Least-squares amplitude and offset for fixed (gamma, omega).
inline void linear_init(DampedSinusoidParams& p, const std::vector<double>& x, std::span<const double> y) {
  Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
  Eigen::Vector2d r = Eigen::Vector2d::Zero();
  for (std::size_t j = 0; j < x.size(); ++j) {
    const Eigen::Vector2d phi(std::exp(-p.gamma * x[j]) * std::sin(p.omega * x[j]), 1.0);
    G += phi * phi.transpose();
    r += phi * y[j];
  }
  const Eigen::Vector2d c = G.ldlt().solve(r);
  p.A = c[0];
  p.b = c[1];
}

/// Gauss-Newton with Levenberg damping. Returns true when the step size stalls below tolerance.
inline bool levenberg_marquardt(DampedSinusoidParams& p, const std::vector<double>& x, std::span<const double> y,
                                std::size_t max_iters) {
  double lambda = 1e-3, cost = sse(p, x, y);
  for (std::size_t it = 0; it < max_iters; ++it) {
    Eigen::Matrix4d JtJ = Eigen::Matrix4d::Zero();
    Eigen::Vector4d Jtr = Eigen::Vector4d::Zero();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double e = std::exp(-p.gamma * x[j]), s = std::sin(p.omega * x[j]), c = std::cos(p.omega * x[j]);
      const Eigen::Vector4d J(e * s, -x[j] * p.A * e * s, x[j] * p.A * e * c, 1.0);
      JtJ += J * J.transpose();
      Jtr += J * (p(x[j]) - y[j]);
    }
    for (;;) {
      Eigen::Matrix4d H = JtJ;
      H.diagonal() += lambda * (JtJ.diagonal().array() + 1e-12).matrix();
      const Eigen::Vector4d step = H.ldlt().solve(-Jtr);
      DampedSinusoidParams q{p.A + step[0], p.gamma + step[1], p.omega + step[2], p.b + step[3]};
      const double qc = sse(q, x, y);
      if (std::isfinite(qc) && qc <= cost) {
        const double rel = step.norm() / (1.0 + Eigen::Vector4d(p.A, p.gamma, p.omega, p.b).norm());
        p = q;
        const double drop = cost - qc;
        cost = qc;
        lambda = std::max(lambda / 10.0, 1e-15);
        if (rel < 1e-13 || drop <= 1e-15 * cost || cost < 1e-28) return true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) return true;  // no descent direction left: local minimum
    }
  }
  return false;
}

}  // namespace detail

inline FitResult fit_damped_params(const FunctionSample& f, const FitConfig& cfg = {}) {
  f.validate();
  if (f.spatial_rank() != 1 || f.channels != 1) throw ShapeError("damped fit needs a 1D single-channel sample");
  const std::size_t n = f.grid_shape[0];
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = f.domain[0].lo + static_cast<double>(j) * f.spacing(0);
  const std::span<const double> y = f.values.data();

  FitResult best;
  best.mse = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.omega_starts; ++k) {
    const double t = cfg.omega_starts == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(cfg.omega_starts - 1);
    for (double g : cfg.gamma_starts) {
      DampedSinusoidParams p{0.0, g, cfg.omega_window.lo + t * (cfg.omega_window.hi - cfg.omega_window.lo), 0.0};
      detail::linear_init(p, x, y);
      const bool ok = detail::levenberg_marquardt(p, x, y, cfg.max_iters);
      const double mse = detail::sse(p, x, y) / static_cast<double>(n);
      if (std::isfinite(mse) && mse < best.mse) best = {p, mse, ok};
    }
  }
  // A sin(w x) = (-A) sin(-w x): report the positive-frequency form.
  if (best.params.omega < 0.0) {
    best.params.A = -best.params.A;
    best.params.omega = -best.params.omega;
  }
  return best;
}

}  // namespace fundiff::bench
