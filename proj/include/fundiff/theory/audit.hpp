#pragma once

// Monte Carlo audits of the autoencoder error decomposition
//   W1(P, P^) <= E||f - D(E(f))||_2 + Lip(D) W1(p, p^)
// for truncation autoencoders on RKHS balls, and rate sweeps over n.

#include <cstdio>

#include <fundiff/theory/wasserstein.hpp>

namespace fundiff::theory {

/// empirical: p^ is the empirical measure of n training encodings.
/// perfect: p^ = p, drawn with the same samples as the test encodings.
enum class Oracle { empirical, perfect };

struct AuditConfig {
  RKHSSpec spec;
  std::size_t D = 4;
  std::size_t n = 128;
  std::size_t grid_points = 256;
  BallLaw law = BallLaw::uniform;
  Oracle oracle = Oracle::empirical;
};

struct AuditReport {
  double lhs = 0.0;          // W1(P, P^) on function grids
  double recon_term = 0.0;   // mean ||f - D(E(f))||_2
  double lip_term = 0.0;     // sqrt(mu_1) * W1(p, p^)
  double latent_w1 = 0.0;    // W1(p, p^)
  double mc_halfwidth = 0.0; // 1.96 sd / sqrt(n) of the reconstruction mean
  double max_recon = 0.0;
  double recon_bound = 0.0;  // sqrt(mu_{D+1}), 0 when D = M
  bool holds = false;
  bool recon_within_bound = false;
};

inline AuditReport decomposition_audit(const AuditConfig& c, Rng& rng) {
  c.spec.validate();
  if (c.D == 0 || c.D > c.spec.M) throw ConfigError("audit latent dimension must be in [1, M]");
  const auto grid = unit_grid(c.grid_points);
  const Tensor test = sample_rkhs_ball(c.spec, c.n, rng, c.law);
  const Tensor z_test = truncation_encode(test, c.D);
  const Tensor z_hat = c.oracle == Oracle::perfect ? z_test : truncation_encode(sample_rkhs_ball(c.spec, c.n, rng, c.law), c.D);

  AuditReport r;
  const Tensor f_test = rkhs_decode(test, c.spec, grid);
  const Tensor f_hat = rkhs_decode(z_hat, c.spec, grid);
  r.lhs = w1_exact_small(f_test, f_hat, l2_distance);

  const auto err = reconstruction_errors(test, c.spec, c.D, grid);
  double mean = 0.0, sq = 0.0;
  for (double e : err) mean += e;
  mean /= static_cast<double>(err.size());
  for (double e : err) sq += (e - mean) * (e - mean);
  r.recon_term = mean;
  r.mc_halfwidth = err.size() > 1 ? 1.96 * std::sqrt(sq / static_cast<double>(err.size() - 1) / static_cast<double>(err.size())) : 0.0;
  r.max_recon = *std::max_element(err.begin(), err.end());
  r.recon_bound = c.D < c.spec.M ? std::sqrt(eigen_decay(c.spec, c.D + 1)) : 0.0;
  // Quadrature rounding only; the tail sum itself never exceeds the bound.
  r.recon_within_bound = r.max_recon <= r.recon_bound + 1e-12;

  r.latent_w1 = w1_exact_small(z_test, z_hat);
  r.lip_term = std::sqrt(eigen_decay(c.spec, 1)) * r.latent_w1;
  r.holds = r.lhs <= r.recon_term + r.lip_term + r.mc_halfwidth;
  return r;
}

struct RateRow {
  std::size_t n = 0, D_star = 0;
  double w1_mean = 0.0, w1_std = 0.0, upper_rate_ref = 0.0, lower_rate_ref = 0.0;
  std::size_t holds = 0, recon_ok = 0, trials = 0;
};

inline constexpr const char* kRateHeader = "n,D_star,w1_mean,w1_std,upper_rate_ref,lower_rate_ref";

inline std::string format_row(const RateRow& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g", r.n, r.D_star, r.w1_mean, r.w1_std, r.upper_rate_ref,
                r.lower_rate_ref);
  return buf;
}

/// One row per n (ascending); trial t at n uses the generator (seed, n, t).
inline std::vector<RateRow> rate_sweep(const RKHSSpec& spec, const std::vector<std::size_t>& n_list, std::size_t trials,
                                       std::uint64_t seed, BallLaw law = BallLaw::uniform) {
  if (trials == 0) throw ConfigError("rate sweep needs at least one trial");
  if (!std::is_sorted(n_list.begin(), n_list.end())) throw ConfigError("rate sweep n values must be ascending");
  std::vector<RateRow> rows;
  for (std::size_t n : n_list) {
    RateRow row{n, optimal_latent_dim(n, spec)};
    row.trials = trials;
    std::vector<double> w;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng = make_rng(seed, {n, t});
      const AuditReport a = decomposition_audit({spec, row.D_star, n, 256, law, Oracle::empirical}, rng);
      w.push_back(a.lhs);
      row.holds += a.holds;
      row.recon_ok += a.recon_within_bound;
    }
    for (double v : w) row.w1_mean += v;
    row.w1_mean /= static_cast<double>(trials);
    for (double v : w) row.w1_std += (v - row.w1_mean) * (v - row.w1_mean);
    row.w1_std = trials > 1 ? std::sqrt(row.w1_std / static_cast<double>(trials - 1)) : 0.0;
    row.upper_rate_ref = upper_rate_ref(n, spec);
    row.lower_rate_ref = lower_rate_ref(n, spec);
    rows.push_back(row);
  }
  return rows;
}

/// Counts adjacent increases of `mean` larger than the pooled std of the two
/// neighbours; a sequence passes the trend check with at most `allowed` of them
/// and no increase at all beyond that tolerance.
inline std::size_t trend_violations(const std::vector<double>& mean, const std::vector<double>& sd,
                                    std::size_t* inversions = nullptr) {
  std::size_t big = 0, inv = 0;
  for (std::size_t i = 1; i < mean.size(); ++i) {
    if (mean[i] <= mean[i - 1]) continue;
    ++inv;
    const double pooled = std::sqrt(0.5 * (sd[i] * sd[i] + sd[i - 1] * sd[i - 1]));
    if (mean[i] - mean[i - 1] > pooled) ++big;
  }
  if (inversions) *inversions = inv;
  return big;
}

}  // namespace fundiff::theory
