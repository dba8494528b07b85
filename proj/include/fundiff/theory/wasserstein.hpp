#pragma once

// Wasserstein-1 between empirical measures: exact assignment for small n and a
// sliced surrogate for large n.

#include <iostream>

#include <fundiff/theory/rkhs.hpp>

namespace fundiff::theory {

/// Largest n routed to the exact assignment solver.
inline constexpr std::size_t kExactW1Max = 1024;

/// Minimum-cost perfect matching on a dense n x n cost matrix (row-major).
/// Shortest augmenting paths with potentials, O(n^3). Returns col assigned to each row.
inline std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      const double* crow = cost.data() + (i0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = crow[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(n);
  for (std::size_t j = 1; j <= n; ++j) match[p[j] - 1] = j - 1;
  return match;
}

using Metric = std::function<double(std::span<const double>, std::span<const double>)>;

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

/// Exact W1 between two n-point empirical measures given as rows of (n, k) tensors.
/// Pass `l2_distance` as the metric for grid discretizations of functions on [0,1].
inline double w1_exact_small(const Tensor& A, const Tensor& B, const Metric& metric = euclidean) {
  const std::size_t n = A.dim(0);
  if (B.dim(0) != n) throw ShapeError("W1 sample counts differ: " + std::to_string(n) + " vs " + std::to_string(B.dim(0)));
  if (A.size() / std::max<std::size_t>(n, 1) != B.size() / std::max<std::size_t>(n, 1))
    throw ShapeError("W1 point dimension", A.shape(), B.shape());
  if (n > kExactW1Max) throw ConfigError("exact W1 supports n <= " + std::to_string(kExactW1Max) + "; use sliced_w1");
  if (n == 0) return 0.0;
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = metric(row(A, i), row(B, j));
  const auto match = min_cost_assignment(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
  return total / static_cast<double>(n);
}

/// 1D W1 between empirical measures of any sizes: integral of |F_a - F_b|.
inline double w1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("W1 of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double x = std::min(a[0], b[0]), s = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = j == b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    s += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return s;
}

/// E|u_1| for u uniform on the unit sphere in R^k.
inline double sphere_abs_mean(std::size_t k) {
  const double h = static_cast<double>(k);
  return std::exp(std::lgamma(h / 2.0) - std::lgamma((h + 1.0) / 2.0)) / std::sqrt(std::numbers::pi);
}

/// Mean 1D W1 over random unit directions, divided by E|u_1| so that a
/// set shifted by a constant vector gets its full displacement norm.
/// In 1D this is the exact W1.
inline double sliced_w1(const Tensor& A, const Tensor& B, std::size_t projections, Rng& rng) {
  if (projections == 0) throw ConfigError("sliced W1 needs at least one projection");
  const std::size_t k = A.dim(-1);
  if (B.dim(-1) != k) throw ShapeError("sliced W1 point dimension", A.shape(), B.shape());
  const std::size_t na = A.size() / k, nb = B.size() / k;
  if (k == 1) return w1_1d(A.storage(), B.storage());
  std::normal_distribution<double> g;
  std::vector<double> u(k), pa(na), pb(nb);
  double total = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    double norm = 0.0;
    for (double& c : u) {
      c = g(rng);
      norm += c * c;
    }
    norm = std::sqrt(norm);
    for (double& c : u) c /= norm;
    for (std::size_t i = 0; i < na; ++i) pa[i] = std::inner_product(u.begin(), u.end(), A.ptr() + i * k, 0.0);
    for (std::size_t i = 0; i < nb; ++i) pb[i] = std::inner_product(u.begin(), u.end(), B.ptr() + i * k, 0.0);
    total += w1_1d(pa, pb);
  }
  return total / static_cast<double>(projections) / sphere_abs_mean(k);
}

/// Exact W1 when n <= kExactW1Max, else the sliced surrogate with a bias warning on stderr.
inline double w1(const Tensor& A, const Tensor& B, Rng& rng, std::size_t projections = 256) {
  if (A.dim(0) == B.dim(0) && A.dim(0) <= kExactW1Max) return w1_exact_small(A, B);
  std::cerr << "warning: W1 on " << A.dim(0) << " points uses the sliced surrogate (biased)\n";
  return sliced_w1(A, B, projections, rng);
}

}  // namespace fundiff::theory
