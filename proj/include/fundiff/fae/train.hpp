#pragma once

#include <cstdio>
#include <fstream>

#include <fundiff/core/optim.hpp>
#include <fundiff/fae/physics.hpp>

namespace fundiff::fae {

struct FaeTrainConfig {
  std::size_t iters = 10000;
  std::size_t batch = 16;
  std::size_t queries = 4096;          // per sample, capped at the grid size
  std::size_t residual_points = 1024;  // per sample, when w_physics > 0
  std::vector<std::size_t> downsample{1, 2, 4};
  LossWeights weights;
  optim::Schedule schedule;
  optim::AdamWConfig adamw;
  std::uint64_t seed = 0;
};

/// Draws the batch for a 1-based step from (seed, step) alone, so a resumed run
/// sees the same data as an uninterrupted one. The downsample factor is drawn
/// once per step so every input in the batch shares a resolution.
inline FaeBatch make_fae_batch(const Dataset& ds, const FaeTrainConfig& cfg, std::size_t step) {
  if (ds.size() == 0) throw ConfigError("empty dataset");
  Rng rng = make_rng(cfg.seed, {0xfae, step});
  const std::size_t B = cfg.batch;
  const std::size_t P = ds.grid_shape.size() == 0 ? 0 : shape_numel(ds.grid_shape);
  const std::size_t Q = std::min(cfg.queries, P);
  const std::size_t a = ds.grid_shape.size(), C = ds.channels;
  const std::size_t factor = draw_downsample_factor(ds.grid_shape, cfg.downsample, rng);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);

  FaeBatch b;
  b.query_coords = Tensor({B, Q, a});
  b.targets = Tensor({B, Q, C});
  const Tensor coords = ds.sample(0).coordinates();
  std::vector<std::size_t> order(P);
  for (std::size_t i = 0; i < B; ++i) {
    const FunctionSample f = ds.sample(pick(rng));
    b.inputs.push_back(downsample(f, factor));
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first Q entries are a uniform draw without replacement.
    for (std::size_t q = 0; q < Q; ++q) std::swap(order[q], order[std::uniform_int_distribution<std::size_t>(q, P - 1)(rng)]);
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t k = 0; k < a; ++k) b.query_coords[(i * Q + q) * a + k] = coords.at(order[q], k);
      for (std::size_t c = 0; c < C; ++c) b.targets[(i * Q + q) * C + c] = f.values[order[q] * C + c];
    }
  }
  if (cfg.weights.w_physics > 0.0) {
    const std::size_t R = cfg.residual_points;
    b.residual_coords = Tensor({B, R, a});
    for (std::size_t i = 0; i < B * R; ++i)
      for (std::size_t k = 0; k < a; ++k)
        b.residual_coords[i * a + k] = std::uniform_real_distribution<double>(ds.domain[k].lo, ds.domain[k].hi)(rng);
  }
  return b;
}

struct MetricsRow {
  std::size_t step = 0;
  double loss = 0.0, data = 0.0, physics = 0.0, lr = 0.0;
};

inline std::string format_row(const MetricsRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", r.step, r.loss, r.data, r.physics, r.lr);
  return buf;
}

inline constexpr const char* kFaeMetricsHeader = "step,loss,data_term,physics_term,lr";

/// Writes CSV rows, flushing every `flush_every` rows.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  MetricsWriter(const std::string& path, const std::string& header, std::size_t resume_step, std::size_t flush_every = 50)
      : flush_every_(flush_every) {
    std::vector<std::string> kept;
    if (resume_step > 0) {
      // Keep rows up to the resume point; later rows belong to the interrupted run.
      std::ifstream in(path);
      std::string line;
      if (std::getline(in, line) && line == header)
        while (std::getline(in, line))
          if (!line.empty() && std::stoull(line.substr(0, line.find(','))) <= resume_step) kept.push_back(line);
    }
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics file '" + path + "'");
    out_ << header << '\n';
    for (const auto& l : kept) out_ << l << '\n';
    out_.flush();
  }
  void write(const std::string& row) {
    if (!out_.is_open()) return;
    out_ << row << '\n';
    if (++pending_ >= flush_every_) {
      out_.flush();
      pending_ = 0;
    }
  }
  void flush() {
    if (out_.is_open()) out_.flush();
  }

 private:
  std::ofstream out_;
  std::size_t flush_every_ = 50;
  std::size_t pending_ = 0;
};

using StepCallback = std::function<void(std::size_t step, const nn::ParamStore&)>;

/// Runs optimizer steps ps.step()+1 .. cfg.iters. Returns the metric rows of this call.
inline std::vector<MetricsRow> train_fae(const Fae& fae, nn::ParamStore& ps, const Dataset& ds, const FaeTrainConfig& cfg,
                                         MetricsWriter* metrics = nullptr, const StepCallback& on_step = {}) {
  fae.cfg.validate();
  if (ds.grid_shape.size() != fae.cfg.dec.spatial_rank || ds.channels != fae.cfg.dec.output_dim ||
      ds.channels != fae.cfg.enc.channels)
    throw ConfigError("dataset grid " + shape_str(ds.grid_shape) + " with " + std::to_string(ds.channels) +
                      " channels does not match the autoencoder config");
  std::vector<MetricsRow> rows;
  for (std::size_t step = ps.step() + 1; step <= cfg.iters; ++step) {
    const FaeBatch batch = make_fae_batch(ds, cfg, step);
    const double lr = optim::lr_schedule(step, cfg.schedule);
    LossTerms terms;
    auto [value, grads] = nn::evaluate_with_gradients(
        [&](const nn::ParamStore& p) {
          terms = fae_loss(fae, p, batch, cfg.weights);
          return terms.total;
        },
        ps);
    optim::adamw_step(ps, grads, lr, cfg.adamw);
    MetricsRow r{step, value.item(), terms.data, terms.physics, lr};
    rows.push_back(r);
    if (metrics) metrics->write(format_row(r));
    if (on_step) on_step(step, ps);
  }
  if (metrics) metrics->flush();
  return rows;
}

}  // namespace fundiff::fae
