#pragma once

// Two-layer ReLU networks f(x) = sum_k a_k relu(b_k . x + c_k) on [0,1]^d,
// their path norm, and an audit of the parameter-to-function Lipschitz bound.

#include <iostream>
#include <set>

#include <fundiff/core/nn.hpp>

namespace fundiff::theory {

struct BarronNetParams {
  std::size_t m = 0, d = 0;
  std::vector<double> a;  // m
  std::vector<double> b;  // m x d, row-major
  std::vector<double> c;  // m

  std::span<const double> b_row(std::size_t k) const { return {b.data() + k * d, d}; }
};

enum class BoundMode { audit, strict };

/// Checks |a_k| <= 2/m, ||b_k||_1 = 1, |c_k| <= 1. Audit mode warns, strict mode throws.
inline bool check_bounds(const BarronNetParams& p, BoundMode mode = BoundMode::strict, double tol = 1e-12) {
  if (p.a.size() != p.m || p.c.size() != p.m || p.b.size() != p.m * p.d)
    throw ShapeError("Barron parameters do not match m=" + std::to_string(p.m) + ", d=" + std::to_string(p.d));
  for (std::size_t k = 0; k < p.m; ++k) {
    double l1 = 0.0;
    for (double v : p.b_row(k)) l1 += std::abs(v);
    std::string why;
    if (std::abs(p.a[k]) > 2.0 / static_cast<double>(p.m) + tol) why = "|a_k| > 2/m";
    else if (std::abs(l1 - 1.0) > tol) why = "||b_k||_1 != 1";
    else if (std::abs(p.c[k]) > 1.0 + tol) why = "|c_k| > 1";
    if (why.empty()) continue;
    const std::string msg = "neuron " + std::to_string(k) + ": " + why;
    if (mode == BoundMode::strict) throw ConfigError(msg);
    std::cerr << "warning: " << msg << "\n";
    return false;
  }
  return true;
}

inline double path_norm(const BarronNetParams& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.m; ++k) {
    double l1 = 0.0;
    for (double v : p.b_row(k)) l1 += std::abs(v);
    s += std::abs(p.a[k]) * (l1 + std::abs(p.c[k]));
  }
  return s;
}

inline double two_layer_relu_eval(const BarronNetParams& p, std::span<const double> x) {
  if (x.size() != p.d) throw ShapeError("input has " + std::to_string(x.size()) + " coordinates, network expects " + std::to_string(p.d));
  double f = 0.0;
  for (std::size_t k = 0; k < p.m; ++k) {
    double pre = p.c[k];
    for (std::size_t j = 0; j < p.d; ++j) pre += p.b[k * p.d + j] * x[j];
    f += p.a[k] * std::max(pre, 0.0);
  }
  return f;
}

/// Random parameters satisfying the bounds: a_k uniform in [-2/m, 2/m],
/// b_k uniform on the l1 sphere, c_k uniform in [-1, 1].
inline BarronNetParams random_valid_params(std::size_t m, std::size_t d, Rng& rng) {
  BarronNetParams p{m, d, std::vector<double>(m), std::vector<double>(m * d), std::vector<double>(m)};
  const double amax = 2.0 / static_cast<double>(m);
  std::uniform_real_distribution<double> ua(-amax, amax), uc(-1.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  std::bernoulli_distribution sign(0.5);
  for (std::size_t k = 0; k < m; ++k) {
    p.a[k] = ua(rng);
    double l1 = 0.0;
    for (std::size_t j = 0; j < d; ++j) l1 += p.b[k * d + j] = ex(rng);
    for (std::size_t j = 0; j < d; ++j) p.b[k * d + j] *= (sign(rng) ? 1.0 : -1.0) / l1;
    p.c[k] = uc(rng);
  }
  return p;
}

/// ||theta - theta'||_2 with the output weights rescaled by m/2.
inline double normalized_param_distance(const BarronNetParams& p, const BarronNetParams& q) {
  const double s = 0.5 * static_cast<double>(p.m);
  double d2 = 0.0;
  for (std::size_t k = 0; k < p.m; ++k) d2 += std::pow(s * (p.a[k] - q.a[k]), 2) + std::pow(p.c[k] - q.c[k], 2);
  for (std::size_t i = 0; i < p.b.size(); ++i) d2 += std::pow(p.b[i] - q.b[i], 2);
  return std::sqrt(d2);
}

inline double lipschitz_constant(std::size_t m, std::size_t d) {
  return std::sqrt(20.0 + 4.0 * static_cast<double>(d)) / std::sqrt(static_cast<double>(m));
}

/// `count` points drawn without replacement from the lattice {0, 1/(L-1), ..., 1}^d.
inline std::vector<std::vector<double>> lattice_subsample(std::size_t d, std::size_t L, std::size_t count, Rng& rng) {
  const double total = std::pow(static_cast<double>(L), static_cast<double>(d));
  if (static_cast<double>(count) > total) throw ConfigError("lattice has fewer points than requested");
  std::vector<std::vector<double>> pts;
  std::set<std::size_t> seen;
  std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(total) - 1);
  while (pts.size() < count) {
    std::size_t id = pick(rng);
    if (!seen.insert(id).second) continue;
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j, id /= L) x[j] = static_cast<double>(id % L) / static_cast<double>(L - 1);
    pts.push_back(std::move(x));
  }
  return pts;
}

struct BarronAuditReport {
  std::size_t pairs = 0, holds = 0;
  double max_ratio = 0.0;  // sup |f - f'| / (bound * ||dtheta||); <= 1 when the lemma holds
};

inline BarronAuditReport barron_lipschitz_audit(std::size_t d, std::size_t m, std::size_t pairs, Rng& rng,
                                                std::size_t lattice = 33, std::size_t points = 4096) {
  const auto xs = lattice_subsample(d, lattice, points, rng);
  const double L = lipschitz_constant(m, d);
  BarronAuditReport r;
  r.pairs = pairs;
  for (std::size_t t = 0; t < pairs; ++t) {
    const BarronNetParams p = random_valid_params(m, d, rng), q = random_valid_params(m, d, rng);
    check_bounds(p);
    check_bounds(q);
    double sup = 0.0;
    for (const auto& x : xs) sup = std::max(sup, std::abs(two_layer_relu_eval(p, x) - two_layer_relu_eval(q, x)));
    const double bound = L * normalized_param_distance(p, q);
    r.holds += sup <= bound;
    r.max_ratio = std::max(r.max_ratio, sup / bound);
  }
  return r;
}

}  // namespace fundiff::theory
