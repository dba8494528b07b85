#pragma once

// Function autoencoder: patch encoder with Perceiver aggregation, and a
// coordinate decoder built from cross-attention blocks.

#include <fundiff/fae/function_sample.hpp>

namespace fundiff::fae {

using ad::Var;

struct EncoderConfig {
  std::size_t patch_size = 8;
  std::size_t embed_dim = 256;
  std::size_t depth = 6;
  std::size_t heads = 8;
  std::size_t latent_tokens = 16;
  std::size_t mlp_width = 512;
  std::size_t latent_dim = 8;  // width of each output latent token
  std::size_t channels = 1;
  Shape base_grid{128};        // resolution the positional table is sized for

  Shape base_token_grid() const {
    Shape g;
    for (std::size_t n : base_grid) g.push_back(n / patch_size);
    return g;
  }
  void validate() const {
    nn::check_heads(embed_dim, heads);
    if (base_grid.empty() || base_grid.size() > 2) throw ConfigError("encoder supports 1D and 2D grids");
    for (std::size_t n : base_grid)
      if (patch_size == 0 || n % patch_size != 0)
        throw ConfigError("patch size " + std::to_string(patch_size) + " does not divide base grid axis " +
                          std::to_string(n) + "; valid patch sizes: " + divisors_hint(n));
    if (latent_tokens == 0 || latent_dim == 0 || depth > 64) throw ConfigError("invalid encoder sizes");
  }
};

enum class CoordEmbed { fourier, grid, periodic };
enum class Constraint { none, periodic2d, stream_function, reflect_symmetric };

inline CoordEmbed parse_coord_embed(const std::string& s) {
  if (s == "fourier") return CoordEmbed::fourier;
  if (s == "grid") return CoordEmbed::grid;
  if (s == "periodic") return CoordEmbed::periodic;
  throw ConfigError("unknown coordinate embedding '" + s + "' (fourier | grid | periodic)");
}

inline Constraint parse_constraint(const std::string& s) {
  if (s == "none") return Constraint::none;
  if (s == "periodic2d") return Constraint::periodic2d;
  if (s == "stream_function") return Constraint::stream_function;
  if (s == "reflect_symmetric") return Constraint::reflect_symmetric;
  throw ConfigError("unknown decoder constraint '" + s + "' (none | periodic2d | stream_function | reflect_symmetric)");
}

struct DecoderConfig {
  CoordEmbed coord_embed = CoordEmbed::fourier;
  std::size_t fourier_features = 128;
  double fourier_sigma = 2.0 * std::numbers::pi;
  std::size_t grid_size = 32;  // learnable table resolution per axis for CoordEmbed::grid
  std::size_t cross_depth = 2;
  std::size_t embed_dim = 256;
  std::size_t heads = 8;
  std::size_t mlp_width = 512;
  std::size_t output_dim = 1;
  std::size_t latent_dim = 8;
  std::size_t spatial_rank = 1;
  std::vector<Interval> domain{{0.0, 1.0}};
  Constraint constraint = Constraint::none;
  bool symmetric_mean = false;

  // Periodic constraints embed raw coordinates with period 2*pi.
  CoordEmbed effective_embed() const {
    return constraint == Constraint::periodic2d || constraint == Constraint::stream_function ? CoordEmbed::periodic
                                                                                             : coord_embed;
  }
  std::size_t head_dim() const { return constraint == Constraint::stream_function ? 1 : output_dim; }

  void validate() const {
    nn::check_heads(embed_dim, heads);
    if (domain.size() != spatial_rank) throw ConfigError("decoder domain rank does not match spatial_rank");
    if (constraint != Constraint::none && spatial_rank != 2)
      throw ConfigError("decoder constraints are defined for 2D coordinates");
    if (constraint == Constraint::stream_function && output_dim != 2)
      throw ConfigError("stream_function decoder emits (u, v): output_dim must be 2");
    if (constraint == Constraint::reflect_symmetric)
      for (const Interval& d : domain)
        if (d.lo != 0.0 || d.hi != 1.0) throw ConfigError("reflect_symmetric decoder needs the domain [0,1]^2");
    if (constraint == Constraint::stream_function && coord_embed == CoordEmbed::grid)
      throw ConfigError("grid coordinate embedding has no coordinate derivatives; stream_function needs them");
  }
};

struct FaeConfig {
  EncoderConfig enc;
  DecoderConfig dec;
  void validate() const {
    enc.validate();
    dec.validate();
    if (enc.latent_dim != dec.latent_dim)
      throw ConfigError("encoder latent_dim " + std::to_string(enc.latent_dim) + " does not match decoder latent_dim " +
                        std::to_string(dec.latent_dim));
    if (enc.base_grid.size() != dec.spatial_rank) throw ConfigError("encoder and decoder spatial ranks differ");
  }
};

// ---------------------------------------------------------------------------
// Positional embedding interpolation.

/// (L, L0) linear interpolation matrix on normalized token coordinates in [0,1].
inline Tensor interp_matrix_1d(std::size_t L0, std::size_t L) {
  if (L0 == 0 || L == 0) throw ConfigError("interpolation lengths must be positive");
  Tensor w({L, L0});
  for (std::size_t j = 0; j < L; ++j) {
    if (L0 == 1) {
      w.at(j, 0) = 1.0;
      continue;
    }
    if (L == L0) {
      w.at(j, j) = 1.0;
      continue;
    }
    const double t = L > 1 ? static_cast<double>(j) / static_cast<double>(L - 1) : 0.5;
    const double s = t * static_cast<double>(L0 - 1);
    const std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(s)), L0 - 2);
    const double frac = s - static_cast<double>(i0);
    w.at(j, i0) += 1.0 - frac;
    w.at(j, i0 + 1) += frac;
  }
  return w;
}

/// Interpolation matrix from token grid g0 to g (1D linear or 2D bilinear),
/// acting on row-major flattened token layouts.
inline Tensor interp_matrix(const Shape& g0, const Shape& g) {
  if (g0.size() != g.size()) throw ShapeError("token grid rank", g0, g);
  if (g.size() == 1) return interp_matrix_1d(g0[0], g[0]);
  const Tensor wh = interp_matrix_1d(g0[0], g[0]);
  const Tensor ww = interp_matrix_1d(g0[1], g[1]);
  Tensor w({g[0] * g[1], g0[0] * g0[1]});
  for (std::size_t i = 0; i < g[0]; ++i)
    for (std::size_t j = 0; j < g[1]; ++j)
      for (std::size_t a = 0; a < g0[0]; ++a) {
        const double wa = wh.at(i, a);
        if (wa == 0.0) continue;
        for (std::size_t b = 0; b < g0[1]; ++b) w.at(i * g[1] + j, a * g0[1] + b) = wa * ww.at(j, b);
      }
  return w;
}

inline Var interp_pos_embed(const Var& pe, const Shape& token_grid0, const Shape& token_grid) {
  if (pe.dim(0) != shape_numel(token_grid0)) throw ShapeError("positional table rows", pe.shape(), token_grid0);
  if (token_grid == token_grid0) return pe;
  return ad::matmul(ad::constant(interp_matrix(token_grid0, token_grid)), pe);
}

// ---------------------------------------------------------------------------
// Encoder.

struct Encoder {
  EncoderConfig cfg;
  std::string name = "enc";

  std::size_t patch_len() const {
    return static_cast<std::size_t>(std::pow(cfg.patch_size, cfg.base_grid.size())) * cfg.channels;
  }
  nn::Linear patch_embed() const { return {name + ".patch", patch_len(), cfg.embed_dim}; }
  nn::LayerNorm ln(const std::string& s) const { return {name + "." + s, cfg.embed_dim}; }
  nn::MultiHeadAttention attn(const std::string& s) const { return {name + "." + s, cfg.embed_dim, cfg.heads}; }
  nn::Mlp mlp(const std::string& s) const { return {name + "." + s, cfg.embed_dim, cfg.mlp_width, cfg.embed_dim}; }
  std::string block(std::size_t l) const { return "blocks." + std::to_string(l); }
  nn::Linear proj() const { return {name + ".proj", cfg.embed_dim, cfg.latent_dim}; }

  void init(nn::ParamStore& ps, Rng& rng) const {
    cfg.validate();
    patch_embed().init(ps, rng);
    ps.add(name + ".pos", trunc_normal({shape_numel(cfg.base_token_grid()), cfg.embed_dim}, rng));
    ps.add(name + ".latents", trunc_normal({cfg.latent_tokens, cfg.embed_dim}, rng));
    for (const char* s : {"agg.ln_q", "agg.ln_kv", "agg.ln_mlp", "ln0", "ln_out"}) ln(s).init(ps);
    attn("agg.attn").init(ps, rng);
    mlp("agg.mlp").init(ps, rng);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      ln(block(l) + ".ln1").init(ps);
      attn(block(l) + ".attn").init(ps, rng);
      ln(block(l) + ".ln2").init(ps);
      mlp(block(l) + ".mlp").init(ps, rng);
    }
    proj().init(ps, rng);
  }

  /// patches: (B, L, patch_len) on `token_grid`; returns (B, N, latent_dim).
  Var operator()(const nn::ParamStore& ps, const Tensor& patches, const Shape& token_grid) const {
    ad::NameScope scope(name);
    if (patches.rank() != 3 || patches.dim(2) != patch_len() || patches.dim(1) != shape_numel(token_grid))
      throw ConfigError("encoder input " + shape_str(patches.shape()) + " does not match patch length " +
                        std::to_string(patch_len()) + " on token grid " + shape_str(token_grid));
    const std::size_t B = patches.dim(0);
    Var x = ad::add(patch_embed()(ps, ad::constant(patches)),
                    interp_pos_embed(ps[name + ".pos"], cfg.base_token_grid(), token_grid));
    Var zq = ad::broadcast_to(ps[name + ".latents"], {B, cfg.latent_tokens, cfg.embed_dim});
    Var z = ad::add(zq, attn("agg.attn")(ps, ln("agg.ln_q")(ps, zq), ln("agg.ln_kv")(ps, x)));
    z = ad::add(z, mlp("agg.mlp")(ps, ln("agg.ln_mlp")(ps, z)));
    z = ln("ln0")(ps, z);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      Var h = ln(block(l) + ".ln1")(ps, z);
      z = ad::add(z, attn(block(l) + ".attn")(ps, h, h));
      z = ad::add(z, mlp(block(l) + ".mlp")(ps, ln(block(l) + ".ln2")(ps, z)));
    }
    return proj()(ps, ln("ln_out")(ps, z));
  }
};

/// Stacks the patch sequences of same-resolution samples: (B, L, P^a * C).
inline std::pair<Tensor, Shape> batch_patchify(const std::vector<FunctionSample>& fs, std::size_t patch) {
  if (fs.empty()) throw ConfigError("empty batch");
  Shape token_grid;
  for (std::size_t n : fs.front().grid_shape) token_grid.push_back(n / patch);
  std::vector<Tensor> seqs;
  for (const FunctionSample& f : fs) {
    if (f.grid_shape != fs.front().grid_shape) throw ShapeError("batch grids differ", f.grid_shape, fs.front().grid_shape);
    seqs.push_back(patchify(f, patch));
  }
  const Shape s = seqs.front().shape();
  Tensor out({fs.size(), s[0], s[1]});
  for (std::size_t b = 0; b < fs.size(); ++b)
    std::copy(seqs[b].data().begin(), seqs[b].data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * s[0] * s[1]));
  return {std::move(out), std::move(token_grid)};
}

// ---------------------------------------------------------------------------
// Decoder.

/// gamma(x, y) = [cos x, sin x, cos y, sin y]; coords (..., 2) -> (..., 4).
inline Var periodic_embed(const Var& coords) {
  const int r = static_cast<int>(coords.rank());
  std::vector<Var> parts;
  for (std::size_t a = 0; a < coords.dim(-1); ++a) {
    Var c = ad::slice(coords, r - 1, a, 1);
    parts.push_back(ad::cos(c));
    parts.push_back(ad::sin(c));
  }
  return ad::concat(parts, r - 1);
}

inline Tensor periodic_embed(double x, double y) {
  return Tensor::vector({std::cos(x), std::sin(x), std::cos(y), std::sin(y)});
}

/// (M, G^a) bilinear interpolation weights of normalized points in [0,1]^a onto a
/// G^a lattice; points outside are clamped to the boundary cell.
inline Tensor grid_weights(const Tensor& unit_coords, std::size_t G) {
  const std::size_t M = unit_coords.dim(0), a = unit_coords.dim(1);
  const std::size_t cols = a == 1 ? G : G * G;
  Tensor w({M, cols});
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t i0[2] = {0, 0};
    double fr[2] = {0, 0};
    for (std::size_t k = 0; k < a; ++k) {
      const double s = std::clamp(unit_coords.at(m, k), 0.0, 1.0) * static_cast<double>(G - 1);
      i0[k] = std::min(static_cast<std::size_t>(s), G - 2);
      fr[k] = s - static_cast<double>(i0[k]);
    }
    if (a == 1) {
      w.at(m, i0[0]) = 1.0 - fr[0];
      w.at(m, i0[0] + 1) = fr[0];
    } else {
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj)
          w.at(m, (i0[0] + di) * G + i0[1] + dj) = (di ? fr[0] : 1 - fr[0]) * (dj ? fr[1] : 1 - fr[1]);
    }
  }
  return w;
}

struct Decoder {
  DecoderConfig cfg;
  std::string name = "dec";

  std::size_t coord_features() const {
    switch (cfg.effective_embed()) {
      case CoordEmbed::fourier: return 2 * cfg.fourier_features;
      case CoordEmbed::periodic: return 2 * cfg.spatial_rank;
      case CoordEmbed::grid: break;
    }
    return 0;
  }
  nn::Linear coord_proj() const { return {name + ".coord", coord_features(), cfg.embed_dim}; }
  nn::Linear latent_in() const { return {name + ".latent_in", cfg.latent_dim, cfg.embed_dim}; }
  nn::LayerNorm ln(const std::string& s) const { return {name + "." + s, cfg.embed_dim}; }
  nn::MultiHeadAttention attn(const std::string& s) const { return {name + "." + s, cfg.embed_dim, cfg.heads}; }
  nn::Mlp mlp(const std::string& s) const { return {name + "." + s, cfg.embed_dim, cfg.mlp_width, cfg.embed_dim}; }
  nn::Mlp head() const { return {name + ".head", cfg.embed_dim, cfg.mlp_width, cfg.head_dim()}; }
  std::string block(std::size_t k) const { return "blocks." + std::to_string(k); }

  void init(nn::ParamStore& ps, Rng& rng) const {
    cfg.validate();
    switch (cfg.effective_embed()) {
      case CoordEmbed::fourier:
        ps.add(name + ".fourier_B", randn({cfg.spatial_rank, cfg.fourier_features}, rng, cfg.fourier_sigma), false);
        coord_proj().init(ps, rng);
        break;
      case CoordEmbed::periodic: coord_proj().init(ps, rng); break;
      case CoordEmbed::grid:
        ps.add(name + ".grid",
               trunc_normal({static_cast<std::size_t>(std::pow(cfg.grid_size, cfg.spatial_rank)), cfg.embed_dim}, rng));
        break;
    }
    latent_in().init(ps, rng);
    for (std::size_t k = 0; k < cfg.cross_depth; ++k) {
      for (const char* s : {".ln_q", ".ln_kv", ".ln_mlp"}) ln(block(k) + s).init(ps);
      attn(block(k) + ".attn").init(ps, rng);
      mlp(block(k) + ".mlp").init(ps, rng);
    }
    ln("ln_out").init(ps);
    head().init(ps, rng);
  }

  // Maps physical coordinates (B, Q, a) to [0,1]^a.
  Var normalize(const Var& coords) const {
    Tensor lo({cfg.spatial_rank}), inv({cfg.spatial_rank});
    for (std::size_t k = 0; k < cfg.spatial_rank; ++k) {
      lo[k] = cfg.domain[k].lo;
      inv[k] = 1.0 / (cfg.domain[k].hi - cfg.domain[k].lo);
    }
    return ad::mul(ad::sub(coords, ad::constant(lo)), ad::constant(inv));
  }

  Var embed_coords(const nn::ParamStore& ps, const Var& coords) const {
    const std::size_t B = coords.dim(0), Q = coords.dim(1);
    switch (cfg.effective_embed()) {
      case CoordEmbed::fourier: {
        Var proj = ad::matmul(normalize(coords), ps[name + ".fourier_B"]);
        return coord_proj()(ps, ad::concat({ad::cos(proj), ad::sin(proj)}, -1));
      }
      case CoordEmbed::periodic: return coord_proj()(ps, periodic_embed(coords));
      case CoordEmbed::grid: {
        Tensor unit = normalize(ad::detach(coords)).value().reshaped({B * Q, cfg.spatial_rank});
        Var feats = ad::matmul(ad::constant(grid_weights(unit, cfg.grid_size)), ps[name + ".grid"]);
        return ad::reshape(feats, {B, Q, cfg.embed_dim});
      }
    }
    return {};
  }

  /// Unconstrained network: z (B, N, latent_dim), coords (B, Q, a) -> (B, Q, head_dim).
  Var base(const nn::ParamStore& ps, const Var& z, const Var& coords) const {
    ad::NameScope scope(name);
    Var x = embed_coords(ps, coords);
    Var zc = latent_in()(ps, z);
    for (std::size_t k = 0; k < cfg.cross_depth; ++k) {
      x = ad::add(x, attn(block(k) + ".attn")(ps, ln(block(k) + ".ln_q")(ps, x), ln(block(k) + ".ln_kv")(ps, zc)));
      x = ad::add(x, mlp(block(k) + ".mlp")(ps, ln(block(k) + ".ln_mlp")(ps, x)));
    }
    return head()(ps, ln("ln_out")(ps, x));
  }

  void check_inputs(const Var& z, const Var& coords) const {
    if (z.rank() != 3 || z.dim(2) != cfg.latent_dim)
      throw ShapeError("decoder latent input (B, N, latent_dim)", z.shape(), {z.rank() ? z.dim(0) : 0, 0, cfg.latent_dim});
    if (coords.rank() != 3 || coords.dim(0) != z.dim(0) || coords.dim(2) != cfg.spatial_rank)
      throw ShapeError("decoder coordinates (B, Q, rank)", coords.shape(), {z.dim(0), 0, cfg.spatial_rank});
  }

  /// Constrained decoder output (B, Q, output_dim). For stream_function the
  /// velocity is differentiable w.r.t. `coords` when grad recording is on.
  Var operator()(const nn::ParamStore& ps, const Var& z, const Var& coords) const {
    check_inputs(z, coords);
    switch (cfg.constraint) {
      case Constraint::none:
      case Constraint::periodic2d: return base(ps, z, coords);
      case Constraint::reflect_symmetric: return symmetric(ps, z, coords);
      case Constraint::stream_function: return stream_velocity(ps, z, coords);
    }
    return {};
  }

  // (D(x,y) + D(1-x,y)) + (D(x,1-y) + D(1-x,1-y)): pairing by x-reflection makes
  // the sum bitwise invariant under either reflection.
  Var symmetric(const nn::ParamStore& ps, const Var& z, const Var& coords) const {
    const std::size_t Q = coords.dim(1);
    Var x = ad::slice(coords, 2, 0, 1), y = ad::slice(coords, 2, 1, 1);
    Var rx = ad::sub(ad::constant(1.0), x), ry = ad::sub(ad::constant(1.0), y);
    Var all = ad::concat({ad::concat({x, y}, 2), ad::concat({rx, y}, 2), ad::concat({x, ry}, 2), ad::concat({rx, ry}, 2)}, 1);
    Var d = base(ps, z, all);
    Var s = ad::add(ad::add(ad::slice(d, 1, 0, Q), ad::slice(d, 1, Q, Q)),
                    ad::add(ad::slice(d, 1, 2 * Q, Q), ad::slice(d, 1, 3 * Q, Q)));
    return cfg.symmetric_mean ? ad::mul_scalar(s, 0.25) : s;
  }

  // (u, v) = (d psi/dy, -d psi/dx) by reverse mode over the coordinates.
  Var stream_velocity(const nn::ParamStore& ps, const Var& z, const Var& coords) const {
    const bool outer = ad::grad_enabled();
    ad::EnableGradGuard enable;
    Var c = coords.requires_grad() ? coords : ad::leaf(coords.value());
    Var psi = base(ps, z, c);
    Var dpsi = ad::grad({ad::sum(psi)}, {c}, {}, outer).front();
    return ad::concat({ad::slice(dpsi, 2, 1, 1), ad::neg(ad::slice(dpsi, 2, 0, 1))}, 2);
  }

  /// Scalar stream function psi (B, Q, 1); only valid for stream_function decoders.
  Var stream_function(const nn::ParamStore& ps, const Var& z, const Var& coords) const {
    if (cfg.constraint != Constraint::stream_function) throw ConfigError("decoder has no stream-function head");
    check_inputs(z, coords);
    return base(ps, z, coords);
  }
};

struct Fae {
  FaeConfig cfg;
  Encoder encoder() const { return {cfg.enc}; }
  Decoder decoder() const { return {cfg.dec}; }

  nn::ParamStore init(Rng& rng) const {
    cfg.validate();
    nn::ParamStore ps;
    encoder().init(ps, rng);
    decoder().init(ps, rng);
    return ps;
  }

  Var encode(const nn::ParamStore& ps, const std::vector<FunctionSample>& fs) const {
    auto [patches, grid] = batch_patchify(fs, cfg.enc.patch_size);
    return encoder()(ps, patches, grid);
  }

  /// Latents for one sample, (N, latent_dim), without recording.
  Tensor encode_one(const nn::ParamStore& ps, const FunctionSample& f) const {
    ad::NoGradGuard ng;
    Tensor z = encode(ps, {f}).value();
    return z.reshaped({cfg.enc.latent_tokens, cfg.enc.latent_dim});
  }

  /// Decodes one latent (N, latent_dim) at coords (Q, a) -> (Q, output_dim).
  Tensor decode_at(const nn::ParamStore& ps, const Tensor& z, const Tensor& coords) const {
    ad::NoGradGuard ng;
    const Tensor zb = z.reshaped({1, z.dim(0), z.dim(1)});
    const Tensor cb = coords.reshaped({1, coords.dim(0), coords.dim(1)});
    Tensor out = decoder()(ps, ad::constant(zb), ad::constant(cb)).value();
    return out.reshaped({coords.dim(0), cfg.dec.output_dim});
  }
};

}  // namespace fundiff::fae
