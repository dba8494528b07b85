#pragma once

#include <fundiff/core/io.hpp>

namespace fundiff::fae {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Interval&) const = default;
};

/// A function discretized on an endpoint-inclusive uniform grid:
/// axis i has grid_shape[i] points spanning [domain[i].lo, domain[i].hi].
struct FunctionSample {
  Shape grid_shape;
  std::vector<Interval> domain;
  std::size_t channels = 1;
  Tensor values;  // grid_shape + {channels}

  std::size_t spatial_rank() const { return grid_shape.size(); }
  std::size_t num_points() const { return shape_numel(grid_shape); }

  void validate() const {
    if (grid_shape.empty()) throw ShapeError("function sample needs at least one spatial axis");
    if (domain.size() != grid_shape.size())
      throw ShapeError("domain has " + std::to_string(domain.size()) + " intervals for grid " + shape_str(grid_shape));
    for (const Interval& d : domain)
      if (!(d.hi > d.lo)) throw ConfigError("empty domain interval");
    Shape expect = grid_shape;
    expect.push_back(channels);
    if (values.shape() != expect) throw ShapeError("function sample values", values.shape(), expect);
  }

  double spacing(std::size_t axis) const {
    const std::size_t n = grid_shape[axis];
    return n > 1 ? (domain[axis].hi - domain[axis].lo) / static_cast<double>(n - 1) : 0.0;
  }

  /// Grid coordinates as (num_points, rank), row-major over the grid.
  Tensor coordinates() const {
    const std::size_t r = spatial_rank();
    Tensor c({num_points(), r});
    const Shape strides = kernels::row_major_strides(grid_shape);
    for (std::size_t p = 0; p < num_points(); ++p)
      for (std::size_t a = 0; a < r; ++a) {
        const std::size_t idx = (p / strides[a]) % grid_shape[a];
        c.at(p, a) = domain[a].lo + static_cast<double>(idx) * spacing(a);
      }
    return c;
  }

  /// Values as (num_points, channels).
  Tensor flat_values() const { return values.reshaped({num_points(), channels}); }
};

inline FunctionSample make_sample(Shape grid, std::vector<Interval> domain, std::size_t channels, Tensor values) {
  FunctionSample f{std::move(grid), std::move(domain), channels, std::move(values)};
  f.validate();
  return f;
}

inline std::string divisors_hint(std::size_t n) {
  std::string s;
  for (std::size_t d = 1; d <= n; ++d)
    if (n % d == 0) s += (s.empty() ? "" : ", ") + std::to_string(d);
  return s;
}

/// Splits the grid into non-overlapping P^rank patches: (L, P^rank * C) with
/// patches in row-major order and each patch flattened as (P, ..., P, C).
inline Tensor patchify(const FunctionSample& f, std::size_t patch) {
  f.validate();
  const std::size_t r = f.spatial_rank();
  if (r > 2) throw ConfigError("patchify supports 1D and 2D grids");
  for (std::size_t n : f.grid_shape)
    if (patch == 0 || n % patch != 0)
      throw ConfigError("patch size " + std::to_string(patch) + " does not divide grid axis of length " +
                        std::to_string(n) + "; valid patch sizes: " + divisors_hint(n));
  const std::size_t C = f.channels;
  if (r == 1) return f.values.reshaped({f.grid_shape[0] / patch, patch * C});
  const std::size_t H = f.grid_shape[0], W = f.grid_shape[1];
  const std::size_t ph = H / patch, pw = W / patch;
  Tensor out({ph * pw, patch * patch * C});
  for (std::size_t i = 0; i < ph; ++i)
    for (std::size_t j = 0; j < pw; ++j)
      for (std::size_t a = 0; a < patch; ++a)
        for (std::size_t b = 0; b < patch; ++b)
          for (std::size_t c = 0; c < C; ++c)
            out.at(i * pw + j, (a * patch + b) * C + c) = f.values[((i * patch + a) * W + (j * patch + b)) * C + c];
  return out;
}

inline Tensor unpatchify(const Tensor& seq, const Shape& grid, std::size_t channels, std::size_t patch) {
  const std::size_t C = channels;
  Shape vs = grid;
  vs.push_back(C);
  if (grid.size() == 1) return seq.reshaped(vs);
  const std::size_t H = grid[0], W = grid[1];
  const std::size_t pw = W / patch;
  Tensor out(vs);
  for (std::size_t i = 0; i < H / patch; ++i)
    for (std::size_t j = 0; j < pw; ++j)
      for (std::size_t a = 0; a < patch; ++a)
        for (std::size_t b = 0; b < patch; ++b)
          for (std::size_t c = 0; c < C; ++c)
            out[((i * patch + a) * W + (j * patch + b)) * C + c] = seq.at(i * pw + j, (a * patch + b) * C + c);
  return out;
}

/// Keeps every factor-th grid point on each axis, anchored at index 0.
inline FunctionSample downsample(const FunctionSample& f, std::size_t factor) {
  if (factor == 1) return f;
  for (std::size_t n : f.grid_shape)
    if (factor == 0 || n % factor != 0)
      throw ConfigError("downsample factor " + std::to_string(factor) + " does not divide " + std::to_string(n));
  FunctionSample out;
  out.channels = f.channels;
  out.domain = f.domain;
  for (std::size_t a = 0; a < f.spatial_rank(); ++a) {
    out.grid_shape.push_back(f.grid_shape[a] / factor);
    out.domain[a].hi = f.domain[a].lo + static_cast<double>(f.grid_shape[a] - factor) * f.spacing(a);
  }
  Shape vs = out.grid_shape;
  vs.push_back(f.channels);
  out.values = Tensor(vs);
  const Shape src_st = kernels::row_major_strides(f.grid_shape);
  const Shape dst_st = kernels::row_major_strides(out.grid_shape);
  for (std::size_t p = 0; p < out.num_points(); ++p) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < out.spatial_rank(); ++a) src += ((p / dst_st[a]) % out.grid_shape[a]) * factor * src_st[a];
    for (std::size_t c = 0; c < f.channels; ++c) out.values[p * f.channels + c] = f.values[src * f.channels + c];
  }
  return out;
}

/// Draws a factor from `factors`; factors that do not divide every axis are
/// skipped and redrawn. Falls back to 1 when none divides.
inline std::size_t draw_downsample_factor(const Shape& grid, const std::vector<std::size_t>& factors, Rng& rng) {
  std::vector<std::size_t> valid;
  for (std::size_t k : factors)
    if (k > 0 && std::all_of(grid.begin(), grid.end(), [k](std::size_t n) { return n % k == 0; })) valid.push_back(k);
  if (valid.empty()) return 1;
  std::vector<std::size_t> pool = factors;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (;;) {
    const std::size_t k = pool[pick(rng)];
    if (std::find(valid.begin(), valid.end(), k) != valid.end()) return k;
  }
}

inline FunctionSample random_downsample(const FunctionSample& f, const std::vector<std::size_t>& factors, Rng& rng) {
  return downsample(f, draw_downsample_factor(f.grid_shape, factors, rng));
}

// ---------------------------------------------------------------------------
// Dataset files: `<path>` holds the concatenated sample values, `<path>.json`
// the manifest {grid_shape, domain, channels, count, dtype}.

struct Dataset {
  Shape grid_shape;
  std::vector<Interval> domain;
  std::size_t channels = 1;
  std::vector<Tensor> values;
  io::json extra = io::json::object();

  std::size_t size() const { return values.size(); }
  FunctionSample sample(std::size_t i) const { return FunctionSample{grid_shape, domain, channels, values.at(i)}; }
  void push(const FunctionSample& f) {
    if (values.empty() && grid_shape.empty()) {
      grid_shape = f.grid_shape;
      domain = f.domain;
      channels = f.channels;
    }
    if (f.grid_shape != grid_shape || f.channels != channels) throw ShapeError("dataset sample grid", f.grid_shape, grid_shape);
    values.push_back(f.values);
  }
};

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::string blob;
  for (const Tensor& t : ds.values) io::append_doubles(blob, t.data());
  io::json dom = io::json::array();
  for (const Interval& d : ds.domain) dom.push_back({d.lo, d.hi});
  io::json m = {{"format", "fundiff-dataset-v1"},
                {"grid_shape", ds.grid_shape},
                {"domain", dom},
                {"channels", ds.channels},
                {"count", ds.size()},
                {"dtype", "float64-le"},
                {"extra", ds.extra}};
  io::write_file_atomic(path, blob);
  io::write_file_atomic(io::manifest_path(path), io::dump_json(m));
}

inline Dataset load_dataset(const std::string& path) {
  const std::string where = "dataset manifest '" + io::manifest_path(path) + "'";
  if (!std::filesystem::exists(io::manifest_path(path))) throw IoError(where + " not found");
  const io::json m = io::load_json(io::manifest_path(path));
  Dataset ds;
  ds.grid_shape = io::require_field<Shape>(m, "grid_shape", where);
  ds.channels = io::require_field<std::size_t>(m, "channels", where);
  const auto count = io::require_field<std::size_t>(m, "count", where);
  const auto dtype = io::require_field<std::string>(m, "dtype", where);
  if (dtype != "float64-le") throw IoError(where + ": field 'dtype' must be float64-le, got " + dtype);
  const auto dom = io::require_field<std::vector<std::vector<double>>>(m, "domain", where);
  if (dom.size() != ds.grid_shape.size()) throw IoError(where + ": field 'domain' does not match grid_shape");
  for (const auto& d : dom) {
    if (d.size() != 2 || !(d[1] > d[0])) throw IoError(where + ": field 'domain' has an invalid interval");
    ds.domain.push_back({d[0], d[1]});
  }
  if (ds.channels == 0) throw IoError(where + ": field 'channels' must be positive");
  ds.extra = m.value("extra", io::json::object());
  const std::string blob = io::read_file(path);
  const std::size_t per = shape_numel(ds.grid_shape) * ds.channels;
  if (blob.size() != count * per * 8)
    throw IoError(where + ": field 'count' implies " + std::to_string(count * per * 8) + " bytes, blob has " +
                  std::to_string(blob.size()));
  Shape vs = ds.grid_shape;
  vs.push_back(ds.channels);
  for (std::size_t i = 0; i < count; ++i) ds.values.emplace_back(vs, io::read_doubles(blob, i * per * 8, per));
  return ds;
}

}  // namespace fundiff::fae
