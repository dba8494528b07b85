#pragma once

#include <complex>
#include <sstream>

#include <fftw3.h>

#include <fundiff/bench/damped.hpp>

namespace fundiff::bench {

inline double rel_l2(const FunctionSample& pred, const FunctionSample& ref) {
  if (pred.values.shape() != ref.values.shape()) throw ShapeError("rel_l2 grids", pred.values.shape(), ref.values.shape());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.values.size(); ++i) {
    num += std::pow(pred.values[i] - ref.values[i], 2);
    den += ref.values[i] * ref.values[i];
  }
  if (den == 0.0) throw ConfigError("rel_l2 reference has zero norm");
  return std::sqrt(num / den);
}

/// Radial spectrum of a square periodic field sampled at N x N points covering
/// one period (no duplicated endpoint). E(k) sums 0.5 |u_hat|^2 / N^4 over
/// channels and all wavevectors with round(|k|) = k, so sum_k E(k) = mean(0.5 |u|^2).
inline std::vector<double> energy_spectrum(const FunctionSample& f) {
  f.validate();
  if (f.spatial_rank() != 2 || f.grid_shape[0] != f.grid_shape[1])
    throw ShapeError("energy spectrum needs a square 2D grid, got " + shape_str(f.grid_shape));
  const std::size_t N = f.grid_shape[0], C = f.channels;
  std::vector<double> E(N / 2 + static_cast<std::size_t>(std::ceil(std::sqrt(2.0) * static_cast<double>(N) / 2.0)) + 1, 0.0);
  std::vector<std::complex<double>> buf(N * N);
  auto* data = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(N), static_cast<int>(N), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
  const double norm = 0.5 / std::pow(static_cast<double>(N), 4);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < N * N; ++p) buf[p] = f.values[p * C + c];
    fftw_execute(plan);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        const double ki = i <= N / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(N);
        const double kj = j <= N / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(N);
        E[static_cast<std::size_t>(std::lround(std::hypot(ki, kj)))] += norm * std::norm(buf[i * N + j]);
      }
  }
  fftw_destroy_plan(plan);
  while (E.size() > 1 && E.back() == 0.0) E.pop_back();
  return E;
}

// ---------------------------------------------------------------------------
// Damped-sinusoid evaluation report.

struct MetricsReport {
  std::size_t count = 0;
  double rel_l2 = 0.0;  // median of ||fit - sample|| / ||sample||
  std::vector<double> fit_mse;
  std::array<std::vector<double>, 4> fitted;  // A, gamma, omega, b
  std::array<double, 4> in_range{};           // fraction inside the widened true range
  double median_mse = 0.0;
  std::size_t nonconverged = 0;
  double widen = 0.15;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of empty input");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline MetricsReport eval_damped(const Dataset& samples, const DampedRanges& truth = {}, double widen = 0.15) {
  if (samples.size() == 0) throw ConfigError("empty input: no samples to evaluate");
  MetricsReport r;
  r.count = samples.size();
  r.widen = widen;
  std::vector<double> rel;
  const auto ranges = truth.as_array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const FunctionSample f = samples.sample(i);
    const FitResult fit = fit_damped_params(f);
    r.fit_mse.push_back(fit.mse);
    r.nonconverged += !fit.converged;
    const auto p = fit.params.as_array();
    for (std::size_t k = 0; k < 4; ++k) {
      r.fitted[k].push_back(p[k]);
      r.in_range[k] += ranges[k].widened(widen).contains(p[k]);
    }
    FunctionSample g = f;
    for (std::size_t j = 0; j < f.num_points(); ++j) g.values[j] = fit.params(static_cast<double>(j) * f.spacing(0) + f.domain[0].lo);
    double den = 0.0;
    for (double v : f.values.data()) den += v * v;
    rel.push_back(den > 0.0 ? rel_l2(g, f) : 0.0);
  }
  for (double& v : r.in_range) v /= static_cast<double>(r.count);
  r.rel_l2 = median(rel);
  r.median_mse = median(r.fit_mse);
  return r;
}

inline io::json to_json(const MetricsReport& r) {
  io::json j = {{"count", r.count},         {"rel_l2", r.rel_l2}, {"median_fit_mse", r.median_mse},
                {"fit_mse", r.fit_mse},     {"nonconverged", r.nonconverged}, {"range_widening", r.widen}};
  for (std::size_t k = 0; k < 4; ++k) {
    j["fitted"][kDampedParamNames[k]] = r.fitted[k];
    j["in_range_fraction"][kDampedParamNames[k]] = r.in_range[k];
  }
  return j;
}

struct Histogram {
  double lo = 0.0, hi = 1.0;
  std::vector<std::size_t> counts;
};

/// Fixed-range histogram; values outside land in the edge bins.
inline Histogram histogram(const std::vector<double>& v, double lo, double hi, std::size_t bins) {
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double x : v) {
    const double t = (x - lo) / (hi - lo) * static_cast<double>(bins);
    const auto b = static_cast<std::ptrdiff_t>(std::floor(t));
    h.counts[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1))]++;
  }
  return h;
}

/// Plot range per parameter: the true range padded by half its width.
inline std::array<Range, 4> plot_ranges(const DampedRanges& truth) {
  std::array<Range, 4> out;
  const auto t = truth.as_array();
  for (std::size_t k = 0; k < 4; ++k) out[k] = t[k].widened(1.0);
  return out;
}

/// CSV rows (param, bin_lo, bin_hi, count).
inline std::string histograms_csv(const MetricsReport& r, const DampedRanges& truth = {}, std::size_t bins = 30) {
  std::ostringstream os;
  os << "param,bin_lo,bin_hi,count\n";
  const auto pr = plot_ranges(truth);
  char buf[128];
  for (std::size_t k = 0; k < 4; ++k) {
    const Histogram h = histogram(r.fitted[k], pr[k].lo, pr[k].hi, bins);
    const double w = (h.hi - h.lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%zu\n", kDampedParamNames[k], h.lo + w * static_cast<double>(b),
                    h.lo + w * static_cast<double>(b + 1), h.counts[b]);
      os << buf;
    }
  }
  return os.str();
}

/// Four histogram panels with the true range drawn as dashed red lines.
inline std::string histograms_svg(const MetricsReport& r, const DampedRanges& truth = {}, std::size_t bins = 30) {
  const double W = 260, H = 200, pad = 30;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 4 * W << "\" height=\"" << H + 20 << "\">\n";
  const auto pr = plot_ranges(truth);
  const auto tr = truth.as_array();
  for (std::size_t k = 0; k < 4; ++k) {
    const Histogram h = histogram(r.fitted[k], pr[k].lo, pr[k].hi, bins);
    const double peak = static_cast<double>(std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end())));
    const double x0 = static_cast<double>(k) * W + pad, pw = W - 2 * pad, ph = H - 2 * pad;
    auto sx = [&](double v) { return x0 + (v - h.lo) / (h.hi - h.lo) * pw; };
    os << "<g>\n<text x=\"" << x0 + pw / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << kDampedParamNames[k]
       << "</text>\n";
    for (std::size_t b = 0; b < bins; ++b) {
      const double bh = static_cast<double>(h.counts[b]) / peak * ph;
      os << "<rect x=\"" << x0 + pw * static_cast<double>(b) / static_cast<double>(bins) << "\" y=\"" << pad + ph - bh
         << "\" width=\"" << pw / static_cast<double>(bins) << "\" height=\"" << bh << "\" fill=\"steelblue\"/>\n";
    }
    for (double v : {tr[k].lo, tr[k].hi})
      os << "<line x1=\"" << sx(v) << "\" x2=\"" << sx(v) << "\" y1=\"" << pad << "\" y2=\"" << pad + ph
         << "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
    os << "<line x1=\"" << x0 << "\" x2=\"" << x0 + pw << "\" y1=\"" << pad + ph << "\" y2=\"" << pad + ph
       << "\" stroke=\"black\"/>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace fundiff::bench
