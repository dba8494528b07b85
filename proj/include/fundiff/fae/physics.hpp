#pragma once

// Coordinate derivatives of decoded fields: divergence of a decoded velocity,
// the viscous Burgers residual, and the composite reconstruction/physics loss.

#include <fundiff/fae/model.hpp>

namespace fundiff::fae {

/// A field evaluated at coordinates (B, Q, 2) returning (B, Q, C).
using FieldFn = std::function<Var(const Var& coords)>;

/// Gradient of sum(out[..., channel]) w.r.t. coords, with history.
inline Var coord_gradient(const Var& out, std::size_t channel, const Var& coords) {
  Var sel = out.dim(-1) == 1 ? out : ad::slice(out, -1, channel, 1);
  return ad::grad({ad::sum(sel)}, {coords}, {}, true).front();
}

/// du/dx + dv/dy for a velocity field (u, v), by nested reverse mode.
inline Tensor divergence(const FieldFn& velocity, const Tensor& coords) {
  ad::EnableGradGuard enable;
  Var c = ad::leaf(coords);
  Var uv = velocity(c);
  Var du = coord_gradient(uv, 0, c);
  Var dv = coord_gradient(uv, 1, c);
  return ad::add(ad::slice(du, -1, 0, 1), ad::slice(dv, -1, 1, 1)).value();
}

/// R[u] = u_t + u u_x - nu u_xx with coordinates ordered (x, t). Differentiable
/// w.r.t. whatever `u` depends on when grad recording is on.
inline Var burgers_residual(const FieldFn& u_fn, const Tensor& coords, double nu) {
  const bool outer = ad::grad_enabled();
  ad::EnableGradGuard enable;
  Var c = ad::leaf(coords);
  Var u = u_fn(c);
  if (u.dim(-1) != 1) throw ShapeError("Burgers residual needs a scalar field", u.shape(), {u.dim(0), u.dim(1), 1});
  Var du = coord_gradient(u, 0, c);
  Var ux = ad::slice(du, -1, 0, 1);
  Var ut = ad::slice(du, -1, 1, 1);
  Var uxx = ad::slice(ad::grad({ad::sum(ux)}, {c}, {}, outer).front(), -1, 0, 1);
  Var r = ad::add(ad::add(ut, ad::mul(u, ux)), ad::mul_scalar(uxx, -nu));
  return outer ? r : ad::detach(r);
}

struct LossWeights {
  double w_data = 1.0;
  double w_physics = 0.0;
  double nu = 0.01;  // Burgers viscosity for the physics term
};

struct FaeBatch {
  std::vector<FunctionSample> inputs;  // encoder inputs, one resolution per batch
  Tensor query_coords;                 // (B, Q, a)
  Tensor targets;                      // (B, Q, C)
  Tensor residual_coords;              // (B, R, 2), used when w_physics > 0
};

struct LossTerms {
  Var total;
  double data = 0.0;
  double physics = 0.0;
};

/// w_data * MSE(recon) + w_physics * mean(R^2).
inline LossTerms fae_loss(const Fae& fae, const nn::ParamStore& ps, const FaeBatch& batch, const LossWeights& w) {
  ad::NameScope scope("fae_loss");
  Var z = fae.encode(ps, batch.inputs);
  const Decoder dec = fae.decoder();
  Var pred = dec(ps, z, ad::constant(batch.query_coords));
  if (pred.shape() != batch.targets.shape()) throw ShapeError("reconstruction vs target", pred.shape(), batch.targets.shape());
  Var data = ad::mean(ad::square(ad::sub(pred, ad::constant(batch.targets))));
  LossTerms out;
  out.data = data.item();
  out.total = ad::mul_scalar(data, w.w_data);
  if (w.w_physics > 0.0) {
    if (dec.cfg.effective_embed() == CoordEmbed::grid)
      throw ConfigError("grid coordinate embedding has no coordinate derivatives; physics loss needs them");
    Var r = burgers_residual([&](const Var& c) { return dec(ps, z, c); }, batch.residual_coords, w.nu);
    Var phys = ad::mean(ad::square(r));
    out.physics = phys.item();
    out.total = ad::add(out.total, ad::mul_scalar(phys, w.w_physics));
  }
  return out;
}

}  // namespace fundiff::fae
