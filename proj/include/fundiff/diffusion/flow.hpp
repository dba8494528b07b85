#pragma once

// Rectified flow on latent tokens.
//
// Time convention: data sits at tau = 0 and noise at tau = 1, with
// z_tau = (1 - tau) z1 + tau z0 for data z1 and noise z0. The network learns
// g ~ z1 - z0, and the sampler integrates dz/ds = g(z, 1 - s) for pseudo-time
// s from 0 to 1, i.e. from the noise end back to the data end.

#include <fundiff/core/optim.hpp>
#include <fundiff/diffusion/dit.hpp>
#include <fundiff/fae/train.hpp>

namespace fundiff::diffusion {

/// z_tau = (1 - tau) z1 + tau z0 with per-sample tau (B).
inline Var interpolate(const Var& z1, const Var& z0, const Var& tau) {
  Var t = ad::reshape(tau, {tau.size(), 1, 1});
  return ad::add(ad::mul(ad::sub(ad::constant(1.0), t), z1), ad::mul(t, z0));
}

struct RfDraw {
  Tensor z0;   // noise, same shape as the data batch
  Tensor tau;  // (B)
};

inline RfDraw draw_rf(const Shape& batch_shape, Rng& rng) {
  RfDraw d{randn(batch_shape, rng), rand_uniform({batch_shape[0]}, rng)};
  return d;
}

/// Velocity model: (z (B,N,D), tau (B), cond or null) -> (B,N,D).
using VelocityModel = std::function<Var(const Var& z, const Tensor& tau, const Var* cond)>;

/// Batch mean of ||(z1 - z0) - g(z_tau, tau)||^2 for one (tau, z0) pair per sample.
inline Var rf_training_loss(const VelocityModel& g, const Tensor& z1, const RfDraw& d, const Tensor* cond = nullptr) {
  if (d.z0.shape() != z1.shape()) throw ShapeError("noise vs data latents", d.z0.shape(), z1.shape());
  Var zt = interpolate(ad::constant(z1), ad::constant(d.z0), ad::constant(d.tau));
  std::optional<Var> c;
  if (cond) c = ad::constant(*cond);
  Var target = ad::constant(kernels::binary(z1, d.z0, std::minus<>()));
  Var err = ad::square(ad::sub(target, g(zt, d.tau, c ? &*c : nullptr)));
  return ad::mul_scalar(ad::sum(err), 1.0 / static_cast<double>(z1.dim(0)));
}

inline VelocityModel dit_model(const DiT& dit, const nn::ParamStore& ps) {
  return [&dit, &ps](const Var& z, const Tensor& tau, const Var* cond) { return dit(ps, z, tau, cond); };
}

/// Encodes a batch of functions with the frozen encoder, then evaluates the loss.
inline Var rf_training_loss(const DiT& dit, const nn::ParamStore& dit_ps, const fae::Fae& fae,
                            const nn::ParamStore& fae_ps, const std::vector<fae::FunctionSample>& fs, Rng& rng) {
  Tensor z1;
  {
    ad::NoGradGuard ng;
    z1 = fae.encode(fae_ps, fs).value();
  }
  return rf_training_loss(dit_model(dit, dit_ps), z1, draw_rf(z1.shape(), rng));
}

/// z~ = z + E(c); pure addition.
inline Tensor condition_latent(const Tensor& z, const Tensor& encoded_cond) {
  if (z.shape() != encoded_cond.shape()) throw ShapeError("latent vs encoded condition", z.shape(), encoded_cond.shape());
  return kernels::binary(z, encoded_cond, std::plus<>());
}

inline Tensor condition_latent(const Tensor& z, const fae::FunctionSample& c, const fae::Fae& fae,
                               const nn::ParamStore& fae_ps) {
  return condition_latent(z, fae.encode_one(fae_ps, c));
}

enum class Integrator { euler, heun, rk4 };

inline Integrator parse_integrator(const std::string& s) {
  if (s == "euler") return Integrator::euler;
  if (s == "heun") return Integrator::heun;
  if (s == "rk4") return Integrator::rk4;
  throw ConfigError("unknown integrator '" + s + "' (euler | heun | rk4)");
}

struct SamplerConfig {
  std::size_t steps = 50;
  Integrator integrator = Integrator::heun;
};

/// Plain velocity field on tensors: (z, tau) -> g.
using VelocityFn = std::function<Tensor(const Tensor& z, double tau)>;

/// Integrates from the noise end (tau = 1) to the data end (tau = 0).
inline Tensor sample_ode(const VelocityFn& g, const SamplerConfig& cfg, Tensor z) {
  if (cfg.steps == 0) throw ConfigError("sampler steps must be at least 1");
  const double h = 1.0 / static_cast<double>(cfg.steps);
  auto axpy = [](const Tensor& x, double a, const Tensor& y) {
    return kernels::binary(x, y, [a](double u, double v) { return u + a * v; });
  };
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double tau = 1.0 - static_cast<double>(k) * h;
    switch (cfg.integrator) {
      case Integrator::euler: z = axpy(z, h, g(z, tau)); break;
      case Integrator::heun: {
        const Tensor k1 = g(z, tau);
        const Tensor k2 = g(axpy(z, h, k1), tau - h);
        z = axpy(axpy(z, 0.5 * h, k1), 0.5 * h, k2);
        break;
      }
      case Integrator::rk4: {
        const Tensor k1 = g(z, tau);
        const Tensor k2 = g(axpy(z, 0.5 * h, k1), tau - 0.5 * h);
        const Tensor k3 = g(axpy(z, 0.5 * h, k2), tau - 0.5 * h);
        const Tensor k4 = g(axpy(z, h, k3), tau - h);
        z = axpy(axpy(axpy(axpy(z, h / 6, k1), h / 3, k2), h / 3, k3), h / 6, k4);
        break;
      }
    }
    if (!z.all_finite()) throw NonFiniteError("sampler state at step " + std::to_string(k + 1));
  }
  return z;
}

/// Samples `count` latents from a trained DiT; `cond` (N, D) is added at every query.
inline Tensor sample_latents(const DiT& dit, const nn::ParamStore& ps, const SamplerConfig& cfg, std::size_t count,
                             Rng& rng, const Tensor* cond = nullptr) {
  Tensor z0 = randn({count, dit.cfg.tokens, dit.cfg.token_dim}, rng);
  std::optional<Tensor> cb;
  if (cond) cb = kernels::broadcast_to(*cond, z0.shape());
  return sample_ode([&](const Tensor& z, double tau) { return dit.velocity(ps, z, tau, cb ? &*cb : nullptr); }, cfg,
                    std::move(z0));
}

// ---------------------------------------------------------------------------
// Training.

struct DiTTrainConfig {
  std::size_t iters = 20000;
  std::size_t batch = 128;
  optim::Schedule schedule;
  optim::AdamWConfig adamw;
  std::uint64_t seed = 0;
  bool conditional = false;  // condition on encodings of downsampled inputs
};

struct LatentSet {
  std::vector<Tensor> z;                 // (N, D) per sample
  std::vector<std::vector<Tensor>> cond;  // per sample, one encoding per condition variant
};

/// Latents of every dataset sample from the frozen encoder; with `cond_factors`,
/// also the encodings of each sample downsampled by each factor.
inline LatentSet encode_dataset(const fae::Fae& fae, const nn::ParamStore& fae_ps, const fae::Dataset& ds,
                                const std::vector<std::size_t>& cond_factors = {}) {
  LatentSet s;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const fae::FunctionSample f = ds.sample(i);
    s.z.push_back(fae.encode_one(fae_ps, f));
    std::vector<Tensor> cs;
    for (std::size_t k : cond_factors)
      if (std::all_of(f.grid_shape.begin(), f.grid_shape.end(), [k](std::size_t n) { return n % k == 0; }))
        cs.push_back(fae.encode_one(fae_ps, fae::downsample(f, k)));
    s.cond.push_back(std::move(cs));
  }
  return s;
}

inline constexpr const char* kDiTMetricsHeader = "step,loss,lr";

struct DiTRow {
  std::size_t step = 0;
  double loss = 0.0, lr = 0.0;
};

inline std::string format_row(const DiTRow& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", r.step, r.loss, r.lr);
  return buf;
}

/// Batch for a 1-based step, drawn from (seed, step) alone.
struct DiTBatch {
  Tensor z1;
  std::optional<Tensor> cond;
  RfDraw draw;
};

inline DiTBatch make_dit_batch(const LatentSet& data, const DiTTrainConfig& cfg, std::size_t step) {
  if (data.z.empty()) throw ConfigError("empty latent set");
  Rng rng = make_rng(cfg.seed, {0xd17, step});
  const Shape tok = data.z.front().shape();
  const std::size_t per = shape_numel(tok);
  DiTBatch b;
  b.z1 = Tensor({cfg.batch, tok[0], tok[1]});
  if (cfg.conditional) b.cond = Tensor(b.z1.shape());
  std::uniform_int_distribution<std::size_t> pick(0, data.z.size() - 1);
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    const std::size_t j = pick(rng);
    std::copy(data.z[j].data().begin(), data.z[j].data().end(), b.z1.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    if (cfg.conditional) {
      const auto& cs = data.cond.at(j);
      if (cs.empty()) throw ConfigError("conditional training needs condition encodings");
      const Tensor& c = cs[std::uniform_int_distribution<std::size_t>(0, cs.size() - 1)(rng)];
      std::copy(c.data().begin(), c.data().end(), b.cond->data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
  }
  b.draw = draw_rf(b.z1.shape(), rng);
  return b;
}

inline std::vector<DiTRow> train_dit(const DiT& dit, nn::ParamStore& ps, const LatentSet& data, const DiTTrainConfig& cfg,
                                     fae::MetricsWriter* metrics = nullptr, const fae::StepCallback& on_step = {}) {
  dit.cfg.validate();
  if (!data.z.empty() && data.z.front().shape() != Shape{dit.cfg.tokens, dit.cfg.token_dim})
    throw ConfigError("latent tokens " + shape_str(data.z.front().shape()) + " do not match DiT tokens " +
                      shape_str({dit.cfg.tokens, dit.cfg.token_dim}));
  std::vector<DiTRow> rows;
  for (std::size_t step = ps.step() + 1; step <= cfg.iters; ++step) {
    const DiTBatch b = make_dit_batch(data, cfg, step);
    const double lr = optim::lr_schedule(step, cfg.schedule);
    auto [value, grads] = nn::evaluate_with_gradients(
        [&](const nn::ParamStore& p) { return rf_training_loss(dit_model(dit, p), b.z1, b.draw, b.cond ? &*b.cond : nullptr); },
        ps);
    optim::adamw_step(ps, grads, lr, cfg.adamw);
    DiTRow r{step, value.item(), lr};
    rows.push_back(r);
    if (metrics) metrics->write(format_row(r));
    if (on_step) on_step(step, ps);
  }
  if (metrics) metrics->flush();
  return rows;
}

}  // namespace fundiff::diffusion
