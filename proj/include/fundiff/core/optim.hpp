#pragma once

#include <fundiff/core/nn.hpp>

namespace fundiff::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// One AdamW update with bias correction and decoupled weight decay. Gradients
/// are validated before any parameter is touched, so a non-finite gradient
/// aborts the whole step.
inline void adamw_step(nn::ParamStore& ps, const nn::GradMap& grads, double lr, const AdamWConfig& cfg = {}) {
  for (const auto& [name, g] : grads) {
    const nn::Param& p = ps.get(name);
    if (g.shape() != p.var.shape()) throw ShapeError("gradient for '" + name + "'", g.shape(), p.var.shape());
    if (!g.all_finite()) throw NonFiniteError("gradient of '" + name + "'");
  }
  const std::size_t t = ps.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& [name, g] : grads) {
    nn::Param& p = ps.get(name);
    if (!p.trainable) continue;
    Tensor& theta = p.var.mutable_value();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g[i];
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      theta[i] -= lr * cfg.weight_decay * theta[i];
      theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  ps.set_step(t);
}

struct Schedule {
  double base_lr = 1e-3;
  std::size_t warmup_steps = 2000;
  std::size_t decay_every = 2000;
  double decay_rate = 0.9;
};

/// Linear warm-up from 0 to base_lr, then stepwise exponential decay.
inline double lr_schedule(std::size_t step, double base_lr, std::size_t warmup_steps, std::size_t decay_every,
                          double decay_rate) {
  if (warmup_steps == 0) throw ConfigError("warmup_steps must be at least 1");
  if (step <= warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const std::size_t k = decay_every == 0 ? 0 : (step - warmup_steps) / decay_every;
  return base_lr * std::pow(decay_rate, static_cast<double>(k));
}

inline double lr_schedule(std::size_t step, const Schedule& s) {
  return lr_schedule(step, s.base_lr, s.warmup_steps, s.decay_every, s.decay_rate);
}

}  // namespace fundiff::optim
