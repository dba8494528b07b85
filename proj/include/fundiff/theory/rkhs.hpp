#pragma once

// RKHS balls on [0,1] with a Fourier eigenbasis, truncation autoencoders and
// their reconstruction / Lipschitz audits.

#include <numbers>

#include <fundiff/core/nn.hpp>

namespace fundiff::theory {

enum class Decay { polynomial, exponential };

struct RKHSSpec {
  Decay decay = Decay::polynomial;
  double beta = 1.0;   // polynomial exponent: mu_i ~ i^(-2 beta)
  double gamma = 1.0;  // exponential: mu_i ~ exp(-C1 i^gamma)
  double C1 = 1.0;
  double c_H = 1.0, C_H = 1.0;
  std::size_t M = 64;  // basis truncation

  void validate() const {
    if (M == 0) throw ConfigError("basis truncation M must be at least 1");
    if (!(c_H > 0.0) || c_H > C_H) throw ConfigError("need 0 < c_H <= C_H");
    if (decay == Decay::polynomial && !(beta > 0.0)) throw ConfigError("beta must be positive");
    if (decay == Decay::exponential && (!(gamma > 0.0) || !(C1 > 0.0))) throw ConfigError("gamma and C1 must be positive");
  }

  static RKHSSpec polynomial(double beta, std::size_t M = 64) {
    RKHSSpec s;
    s.beta = beta;
    s.M = M;
    return s;
  }
  static RKHSSpec exponential(double gamma, double C1, std::size_t M = 64) {
    RKHSSpec s;
    s.decay = Decay::exponential;
    s.gamma = gamma;
    s.C1 = C1;
    s.M = M;
    return s;
  }
};

inline Decay parse_decay(const std::string& s) {
  if (s == "poly" || s == "polynomial") return Decay::polynomial;
  if (s == "exp" || s == "exponential") return Decay::exponential;
  throw ConfigError("unknown decay '" + s + "' (poly | exp)");
}

/// Reference eigenvalue mu_i (1-based) with the midpoint constant (c_H + C_H) / 2.
inline double eigen_decay(const RKHSSpec& s, std::size_t i) {
  if (i == 0) throw ConfigError("eigenvalue index is 1-based");
  const double c = 0.5 * (s.c_H + s.C_H), x = static_cast<double>(i);
  return s.decay == Decay::polynomial ? c * std::pow(x, -2.0 * s.beta) : c * std::exp(-s.C1 * std::pow(x, s.gamma));
}

/// Orthonormal Fourier system: phi_1 = 1, phi_2k = sqrt2 cos 2 pi k x, phi_2k+1 = sqrt2 sin 2 pi k x.
inline double basis(std::size_t i, double x) {
  if (i == 0) throw ConfigError("basis index is 1-based");
  if (i == 1) return 1.0;
  const double k = static_cast<double>(i / 2), arg = 2.0 * std::numbers::pi * k * x;
  return std::numbers::sqrt2 * (i % 2 == 0 ? std::cos(arg) : std::sin(arg));
}

/// Periodic grid x_j = j / n on [0,1); quadrature weight 1/n.
inline std::vector<double> unit_grid(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<double>(j) / static_cast<double>(n);
  return x;
}

/// Discrete L2 norm of grid values with spacing 1/n.
inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// Samples coefficient vectors theta in the unit M-ball; f = sum theta_i sqrt(mu_i) phi_i.
enum class BallLaw { uniform, sparse, two_cluster };

inline BallLaw parse_ball_law(const std::string& s) {
  if (s == "uniform") return BallLaw::uniform;
  if (s == "sparse") return BallLaw::sparse;
  if (s == "two_cluster") return BallLaw::two_cluster;
  throw ConfigError("unknown ball law '" + s + "' (uniform | sparse | two_cluster)");
}

namespace detail {

inline std::vector<double> uniform_ball(std::size_t k, double radius, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(k);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& a : v) {
      a = g(rng);
      norm += a * a;
    }
  } while (norm == 0.0);
  const double r = radius * std::pow(std::uniform_real_distribution<double>()(rng), 1.0 / static_cast<double>(k));
  for (double& a : v) a *= r / std::sqrt(norm);
  return v;
}

}  // namespace detail

/// n vectors, each with ||theta||_2 <= 1, as an (n, M) tensor.
/// sparse: uniform on the ball of a random 3-coordinate subspace.
/// two_cluster: +-0.5 e_1 plus uniform noise of radius 0.4.
inline Tensor sample_rkhs_ball(const RKHSSpec& s, std::size_t n, Rng& rng, BallLaw law = BallLaw::uniform) {
  s.validate();
  Tensor out({n, s.M});
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> th(s.M, 0.0);
    switch (law) {
      case BallLaw::uniform: th = detail::uniform_ball(s.M, 1.0, rng); break;
      case BallLaw::sparse: {
        const std::size_t k = std::min<std::size_t>(3, s.M);
        std::vector<std::size_t> idx(s.M);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t q = 0; q < k; ++q) std::swap(idx[q], idx[std::uniform_int_distribution<std::size_t>(q, s.M - 1)(rng)]);
        const auto v = detail::uniform_ball(k, 1.0, rng);
        for (std::size_t q = 0; q < k; ++q) th[idx[q]] = v[q];
        break;
      }
      case BallLaw::two_cluster: {
        th = detail::uniform_ball(s.M, 0.4, rng);
        th[0] += std::bernoulli_distribution(0.5)(rng) ? 0.5 : -0.5;
        break;
      }
    }
    std::copy(th.begin(), th.end(), out.ptr() + r * s.M);
  }
  return out;
}

/// First D coefficients of each row: (n, M) -> (n, D).
inline Tensor truncation_encode(const Tensor& theta, std::size_t D) {
  const std::size_t M = theta.dim(-1), n = theta.size() / M;
  if (D > M) throw ConfigError("latent dimension " + std::to_string(D) + " exceeds basis size " + std::to_string(M));
  Tensor out({n, D});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < D; ++i) out.at(r, i) = theta[r * M + i];
  return out;
}

/// Evaluation matrix E (k, n_grid) with E(i, j) = sqrt(mu_{i+1}) phi_{i+1}(x_j).
inline Tensor synthesis_matrix(const RKHSSpec& s, std::size_t k, const std::vector<double>& grid) {
  Tensor E({k, grid.size()});
  for (std::size_t i = 0; i < k; ++i) {
    const double w = std::sqrt(eigen_decay(s, i + 1));
    for (std::size_t j = 0; j < grid.size(); ++j) E.at(i, j) = w * basis(i + 1, grid[j]);
  }
  return E;
}

/// Decodes coefficient rows (n, k), k <= M, to grid values (n, grid).
inline Tensor rkhs_decode(const Tensor& theta, const RKHSSpec& s, const std::vector<double>& grid) {
  const std::size_t k = theta.dim(-1), n = theta.size() / k;
  if (k > s.M) throw ConfigError("coefficient count " + std::to_string(k) + " exceeds basis size " + std::to_string(s.M));
  const Tensor E = synthesis_matrix(s, k, grid);
  const std::size_t G = grid.size();
  Tensor out({n, G});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < k; ++i) {
      const double t = theta[r * k + i];
      if (t == 0.0) continue;
      for (std::size_t j = 0; j < G; ++j) out[r * G + j] += t * E.at(i, j);
    }
  return out;
}

inline std::span<const double> row(const Tensor& t, std::size_t r) {
  const std::size_t w = t.dim(-1);
  return {t.ptr() + r * w, w};
}

/// Per-sample L2 error of the rank-D truncation, integrated on `grid`.
inline std::vector<double> reconstruction_errors(const Tensor& theta, const RKHSSpec& s, std::size_t D,
                                                 const std::vector<double>& grid) {
  const Tensor f = rkhs_decode(theta, s, grid);
  const Tensor g = rkhs_decode(truncation_encode(theta, D), s, grid);
  std::vector<double> err(theta.dim(0));
  for (std::size_t r = 0; r < err.size(); ++r) err[r] = l2_distance(row(f, r), row(g, r));
  return err;
}

/// Largest observed ||G(t) - G(t')||_2 / ||t - t'||_2 over random pairs in the D-ball.
inline double decoder_lipschitz_audit(const RKHSSpec& s, std::size_t D, std::size_t trials, Rng& rng,
                                      std::size_t grid_points = 256) {
  if (trials == 0) throw ConfigError("trials must be at least 1");
  RKHSSpec sub = s;
  sub.M = D;
  const auto grid = unit_grid(grid_points);
  const Tensor a = sample_rkhs_ball(sub, trials, rng), b = sample_rkhs_ball(sub, trials, rng);
  const Tensor fa = rkhs_decode(a, s, grid), fb = rkhs_decode(b, s, grid);
  double worst = 0.0;
  for (std::size_t r = 0; r < trials; ++r) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < D; ++i) d2 += std::pow(a.at(r, i) - b.at(r, i), 2);
    if (d2 > 0.0) worst = std::max(worst, l2_distance(row(fa, r), row(fb, r)) / std::sqrt(d2));
  }
  return worst;
}

/// Latent dimension balancing truncation and oracle error for sample count n.
inline std::size_t optimal_latent_dim(std::size_t n, const RKHSSpec& s) {
  if (n < 16) throw ConfigError("optimal latent dimension needs n >= 16 (got " + std::to_string(n) + ")");
  const double ln = std::log(static_cast<double>(n));
  const double d = s.decay == Decay::polynomial ? ln / std::log(ln) / s.beta
                                                : std::pow(2.0 * ln / s.C1, 1.0 / (1.0 + s.gamma));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(d)), 1, s.M);
}

/// Upper rate (log log n / log n)^beta, or exp(-(C1/2)^(1/(1+g)) (log n)^(g/(1+g))).
inline double upper_rate_ref(std::size_t n, const RKHSSpec& s) {
  const double ln = std::log(static_cast<double>(n));
  if (s.decay == Decay::polynomial) return std::pow(std::log(ln) / ln, s.beta);
  return std::exp(-std::pow(s.C1 / 2.0, 1.0 / (1.0 + s.gamma)) * std::pow(ln, s.gamma / (1.0 + s.gamma)));
}

/// Lower rate (1 / log n)^beta; only stated for polynomial decay (NaN otherwise).
inline double lower_rate_ref(std::size_t n, const RKHSSpec& s) {
  if (s.decay != Decay::polynomial) return std::numeric_limits<double>::quiet_NaN();
  return std::pow(1.0 / std::log(static_cast<double>(n)), s.beta);
}

}  // namespace fundiff::theory
