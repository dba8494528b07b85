#pragma once

// Diffusion transformer over latent tokens with AdaLN-Zero time conditioning.

#include <fundiff/core/nn.hpp>

namespace fundiff::diffusion {

using ad::Var;

struct DiTConfig {
  std::size_t tokens = 16;        // N latent tokens
  std::size_t token_dim = 8;      // D, must match the autoencoder latent width
  std::size_t hidden_dim = 256;   // transformer width
  std::size_t depth = 8;
  std::size_t heads = 8;
  std::size_t mlp_width = 1024;
  std::size_t time_embed_dim = 64;

  void validate() const {
    nn::check_heads(hidden_dim, heads);
    if (tokens == 0 || token_dim == 0) throw ConfigError("DiT token shape must be positive");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw ConfigError("time_embed_dim must be even");
  }
};

/// Sinusoidal features of tau in [0,1]: (B) -> (B, dim).
inline Tensor timestep_features(const Tensor& tau, std::size_t dim) {
  const std::size_t half = dim / 2, B = tau.size();
  Tensor out({B, dim});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double arg = 1000.0 * tau[b] * freq;
      out.at(b, i) = std::cos(arg);
      out.at(b, half + i) = std::sin(arg);
    }
  return out;
}

struct DiT {
  DiTConfig cfg;
  std::string name = "dit";

  std::size_t H() const { return cfg.hidden_dim; }
  nn::Linear in_proj() const { return {name + ".in", cfg.token_dim, H()}; }
  nn::Linear t1() const { return {name + ".t_embed.fc1", cfg.time_embed_dim, H()}; }
  nn::Linear t2() const { return {name + ".t_embed.fc2", H(), H()}; }
  std::string block(std::size_t l) const { return name + ".blocks." + std::to_string(l); }
  nn::Linear modulation(std::size_t l) const { return {block(l) + ".adaln", H(), 6 * H()}; }
  nn::MultiHeadAttention attn(std::size_t l) const { return {block(l) + ".attn", H(), cfg.heads}; }
  nn::Mlp mlp(std::size_t l) const { return {block(l) + ".mlp", H(), cfg.mlp_width, H()}; }
  nn::Linear final_mod() const { return {name + ".final.adaln", H(), 2 * H()}; }
  nn::Linear out_proj() const { return {name + ".final.out", H(), cfg.token_dim}; }

  void init(nn::ParamStore& ps, Rng& rng) const {
    cfg.validate();
    in_proj().init(ps, rng);
    ps.add(name + ".pos", trunc_normal({cfg.tokens, H()}, rng));
    t1().init(ps, rng);
    t2().init(ps, rng);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      modulation(l).init(ps, rng, true);
      attn(l).init(ps, rng);
      mlp(l).init(ps, rng);
    }
    final_mod().init(ps, rng, true);
    out_proj().init(ps, rng, true);
  }

  nn::ParamStore init(Rng& rng) const {
    nn::ParamStore ps;
    init(ps, rng);
    return ps;
  }

  /// Conditioning vector c = MLP(sinusoid(tau)): (B) -> (B, H).
  Var time_embedding(const nn::ParamStore& ps, const Tensor& tau) const {
    return t2()(ps, ad::silu(t1()(ps, ad::constant(timestep_features(tau, cfg.time_embed_dim)))));
  }

  /// LN(x) * (1 + scale) + shift with per-sample (B, 1, H) modulation.
  static Var modulate(const Var& x, const Var& shift, const Var& scale) {
    return ad::add(ad::mul(ad::layer_norm(x, nullptr, nullptr), ad::add_scalar(scale, 1.0)), shift);
  }

  /// One AdaLN-Zero block: x (B, N, H), c (B, H).
  Var block_forward(const nn::ParamStore& ps, std::size_t l, const Var& x, const Var& c) const {
    const std::size_t B = x.dim(0);
    Var mod = ad::reshape(modulation(l)(ps, ad::silu(c)), {B, 1, 6 * H()});
    auto part = [&](std::size_t k) { return ad::slice(mod, 2, k * H(), H()); };
    Var h = modulate(x, part(0), part(1));
    Var y = ad::add(x, ad::mul(part(2), attn(l)(ps, h, h)));
    Var h2 = modulate(y, part(3), part(4));
    return ad::add(y, ad::mul(part(5), mlp(l)(ps, h2)));
  }

  /// Predicted velocity g(z_tau, tau), shape (B, N, D). `cond` is added to the input.
  Var operator()(const nn::ParamStore& ps, const Var& z, const Tensor& tau, const Var* cond = nullptr) const {
    ad::NameScope scope(name);
    const Shape expect{z.rank() ? z.dim(0) : 0, cfg.tokens, cfg.token_dim};
    if (z.shape() != expect) throw ShapeError("DiT input", z.shape(), expect);
    if (tau.size() != z.dim(0)) throw ShapeError("DiT tau per sample", tau.shape(), {z.dim(0)});
    if (cond && cond->shape() != z.shape()) throw ShapeError("DiT condition", cond->shape(), z.shape());
    Var zin = cond ? ad::add(z, *cond) : z;
    Var x = ad::add(in_proj()(ps, zin), ps[name + ".pos"]);
    Var c = time_embedding(ps, tau);
    for (std::size_t l = 0; l < cfg.depth; ++l) x = block_forward(ps, l, x, c);
    const std::size_t B = z.dim(0);
    Var mod = ad::reshape(final_mod()(ps, ad::silu(c)), {B, 1, 2 * H()});
    return out_proj()(ps, modulate(x, ad::slice(mod, 2, 0, H()), ad::slice(mod, 2, H(), H())));
  }

  Tensor velocity(const nn::ParamStore& ps, const Tensor& z, double tau, const Tensor* cond = nullptr) const {
    ad::NoGradGuard ng;
    const Tensor taus = Tensor::full({z.dim(0)}, tau);
    if (cond) {
      Var c = ad::constant(*cond);
      return (*this)(ps, ad::constant(z), taus, &c).value();
    }
    return (*this)(ps, ad::constant(z), taus).value();
  }
};

}  // namespace fundiff::diffusion
