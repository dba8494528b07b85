#pragma once

// Command implementations behind the `fundiff` CLI. Each returns a JSON summary
// and throws on failure.

#include <chrono>
#include <ctime>

#include <openssl/evp.h>

#include <fundiff/app/config.hpp>
#include <fundiff/bench/metrics.hpp>
#include <fundiff/bench/pde.hpp>
#include <fundiff/core/gradcheck.hpp>
#include <fundiff/theory/audit.hpp>

namespace fundiff::app {

using io::json;

// Stream ids for make_rng(seed, {stream, ...}).
inline constexpr std::uint64_t kInitStream = 0x1417;
inline constexpr std::uint64_t kSampleStream = 0x5a3e;
inline constexpr std::uint64_t kDataStream = 0xda7a;

// ---------------------------------------------------------------------------
// Run manifests.

/// git blob hash: sha1("blob <size>\0" + content), hex.
inline std::string git_blob_hash(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr)) throw IoError("sha1 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command, config_hash, started, finished;
  json inputs = json::object();  // path -> git blob hash (file and manifest)
  std::vector<std::string> metrics, outputs;

  RunManifest(std::string cmd, std::string hash) : command(std::move(cmd)), config_hash(std::move(hash)), started(utc_now()) {}

  void add_input(const std::string& path) {
    inputs[path] = git_blob_hash(io::read_file(path));
    if (std::filesystem::exists(io::manifest_path(path)))
      inputs[io::manifest_path(path)] = git_blob_hash(io::read_file(io::manifest_path(path)));
  }

  void write(const std::string& path) {
    finished = utc_now();
    const json j = {{"command", command}, {"config_hash", config_hash}, {"inputs", inputs}, {"started", started},
                    {"finished", finished}, {"metrics", metrics},       {"outputs", outputs}};
    io::write_file_atomic(path, io::dump_json(j));
  }
};

inline std::string join(const std::string& dir, const std::string& file) { return (std::filesystem::path(dir) / file).string(); }

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is not set");
  if (!std::filesystem::exists(path)) throw IoError(what + " '" + path + "' not found");
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOptions {
  std::string kind = "damped";  // damped | burgers | grf
  std::size_t n = 256, grid = 128;
  std::uint64_t seed = 0;
  double nu = 0.01, T = 1.0;
  std::string out;
};

/// Burgers trajectories on a grid x grid (x, t) lattice, solved on a 4x finer x grid.
inline fae::Dataset gen_burgers(std::size_t n, std::size_t grid, double nu, double T, Rng& rng) {
  if (grid < 3) throw ConfigError("Burgers grid needs at least 3 points");
  const std::size_t nx = 4 * (grid - 1);
  const auto w = bench::grf_weights(nx / 2);
  fae::Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const fae::FunctionSample a = bench::grf_initial_condition(nx, w, rng);
    double umax = 0.0;
    for (double v : a.values.data()) umax = std::max(umax, std::abs(v));
    const double dt = 0.9 * bench::burgers_max_dt(umax, nu, 1.0 / static_cast<double>(nx));
    const std::size_t chunks = static_cast<std::size_t>(std::ceil(T / dt / static_cast<double>(grid - 1)));
    ds.push(bench::burgers_fd_solve(a, {nu, nx, chunks * (grid - 1), T, grid, grid}));
  }
  ds.extra = {{"kind", "burgers"}, {"nu", nu}, {"T", T}, {"axes", {"x", "t"}}};
  return ds;
}

inline json gen_data_cmd(const GenDataOptions& o) {
  if (o.out.empty()) throw ConfigError("gen-data needs --out");
  Rng rng = make_rng(o.seed, {kDataStream});
  fae::Dataset ds;
  if (o.kind == "damped") {
    ds = bench::gen_damped_sinusoid(o.n, o.grid, rng).data;
  } else if (o.kind == "burgers") {
    ds = gen_burgers(o.n, o.grid, o.nu, o.T, rng);
  } else if (o.kind == "grf") {
    const auto w = bench::grf_weights(o.grid / 2);
    for (std::size_t i = 0; i < o.n; ++i) ds.push(bench::grf_periodic_1d(o.grid, w, rng));
    ds.extra = {{"kind", "grf"}};
  } else {
    throw ConfigError("unknown dataset kind '" + o.kind + "' (damped | burgers | grf)");
  }
  ds.extra["seed"] = o.seed;
  fae::save_dataset(o.out, ds);
  return {{"command", "gen-data"}, {"kind", o.kind}, {"count", ds.size()}, {"grid_shape", ds.grid_shape}, {"out", o.out}};
}

// ---------------------------------------------------------------------------
// Checkpoint helpers.

inline json geometry(const fae::Dataset& ds) {
  json dom = json::array();
  for (const auto& d : ds.domain) dom.push_back({d.lo, d.hi});
  return {{"grid_shape", ds.grid_shape}, {"domain", dom}, {"channels", ds.channels}};
}

inline fae::Dataset geometry_stub(const json& g) {
  fae::Dataset ds;
  ds.grid_shape = g.at("grid_shape").get<Shape>();
  for (const auto& d : g.at("domain")) ds.domain.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
  ds.channels = g.at("channels").get<std::size_t>();
  return ds;
}

struct LoadedFae {
  RunConfig config;
  fae::Fae model;
  nn::ParamStore params;
  json geom;
};

inline LoadedFae load_fae(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  if (ck.meta.value("kind", "") != "fae") throw IoError("checkpoint '" + path + "' is not an autoencoder checkpoint");
  RunConfig c = RunConfig::from_json(ck.meta.at("config"));
  const json g = ck.meta.at("geometry");
  return {c, fae::Fae{fae_config(c, geometry_stub(g))}, std::move(ck.params), g};
}

struct LoadedDiT {
  RunConfig config;
  diffusion::DiT model;
  nn::ParamStore params;
};

inline LoadedDiT load_dit(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  if (ck.meta.value("kind", "") != "dit") throw IoError("checkpoint '" + path + "' is not a DiT checkpoint");
  RunConfig c = RunConfig::from_json(ck.meta.at("config"));
  return {c, diffusion::DiT{dit_config(c)}, std::move(ck.params)};
}

struct TrainOptions {
  bool resume = false;
  std::size_t max_steps = 0;  // stop after this step (0: run to the configured iters)
  std::string fae_checkpoint; // train-dit: defaults to <out_dir>/fae.ckpt
};

// ---------------------------------------------------------------------------
// train-fae

inline json train_fae_cmd(const RunConfig& c, const TrainOptions& o = {}) {
  RunManifest man("train-fae", config_hash(c));
  require_file(c.text("data"), "dataset");
  const fae::Dataset ds = fae::load_dataset(c.text("data"));
  man.add_input(c.text("data"));
  const fae::Fae model{fae_config(c, ds)};
  fae::FaeTrainConfig tc = fae_train_config(c);
  std::filesystem::create_directories(c.text("out_dir"));
  const std::string ckpt = join(c.text("out_dir"), "fae.ckpt"), csv = join(c.text("out_dir"), "fae_metrics.csv");

  nn::ParamStore ps;
  if (o.resume && std::filesystem::exists(ckpt)) {
    LoadedFae prev = load_fae(ckpt);
    if (config_hash(prev.config) != config_hash(c))
      throw ConfigError("resume checkpoint was written with a different config (" + config_hash(prev.config) + " vs " +
                        config_hash(c) + ")");
    ps = std::move(prev.params);
  } else {
    Rng rng = make_rng(c.seed(), {kInitStream, 1});
    ps = model.init(rng);
  }
  const json meta = {{"kind", "fae"}, {"config", c.to_json()}, {"geometry", geometry(ds)}};
  const std::size_t start = ps.step(), every = c.count("fae.checkpoint_every");
  if (o.max_steps) tc.iters = std::min(tc.iters, o.max_steps);
  fae::MetricsWriter metrics(csv, fae::kFaeMetricsHeader, start);
  const auto rows = fae::train_fae(model, ps, ds, tc, &metrics, [&](std::size_t step, const nn::ParamStore& p) {
    if (every && step % every == 0) io::save_checkpoint(ckpt, p, meta);
  });
  io::save_checkpoint(ckpt, ps, meta);
  man.metrics = {csv};
  man.outputs = {ckpt};
  man.write(join(c.text("out_dir"), "train-fae.run.json"));
  return {{"command", "train-fae"},
          {"steps", ps.step()},
          {"resumed_from", start},
          {"final_loss", rows.empty() ? json(nullptr) : json(rows.back().loss)},
          {"checkpoint", ckpt},
          {"metrics", csv}};
}

// ---------------------------------------------------------------------------
// train-dit

inline void check_latent_match(const fae::FaeConfig& f, const diffusion::DiTConfig& d, const std::string& fae_src,
                               const std::string& dit_src) {
  if (f.enc.latent_tokens != d.tokens || f.enc.latent_dim != d.token_dim)
    throw ConfigError("latent shape mismatch: " + fae_src + " has N=" + std::to_string(f.enc.latent_tokens) +
                      ", D=" + std::to_string(f.enc.latent_dim) + " but " + dit_src + " has N=" + std::to_string(d.tokens) +
                      ", D=" + std::to_string(d.token_dim));
}

inline json train_dit_cmd(const RunConfig& c, const TrainOptions& o = {}) {
  RunManifest man("train-dit", config_hash(c));
  const std::string fae_path = o.fae_checkpoint.empty() ? join(c.text("out_dir"), "fae.ckpt") : o.fae_checkpoint;
  require_file(fae_path, "autoencoder checkpoint");
  require_file(c.text("data"), "dataset");
  LoadedFae fae = load_fae(fae_path);
  const diffusion::DiT dit{dit_config(c)};
  check_latent_match(fae.model.cfg, dit.cfg, "autoencoder checkpoint '" + fae_path + "'", "DiT config");
  const fae::Dataset ds = fae::load_dataset(c.text("data"));
  man.add_input(c.text("data"));
  man.add_input(fae_path);

  diffusion::DiTTrainConfig tc = dit_train_config(c);
  const diffusion::LatentSet latents =
      diffusion::encode_dataset(fae.model, fae.params, ds, tc.conditional ? c.list("dit.cond_factors") : std::vector<std::size_t>{});
  std::filesystem::create_directories(c.text("out_dir"));
  const std::string ckpt = join(c.text("out_dir"), "dit.ckpt"), csv = join(c.text("out_dir"), "dit_metrics.csv");
  nn::ParamStore ps;
  if (o.resume && std::filesystem::exists(ckpt)) {
    LoadedDiT prev = load_dit(ckpt);
    if (config_hash(prev.config) != config_hash(c)) throw ConfigError("resume checkpoint was written with a different config");
    ps = std::move(prev.params);
  } else {
    Rng rng = make_rng(c.seed(), {kInitStream, 2});
    ps = dit.init(rng);
  }
  const json meta = {{"kind", "dit"}, {"config", c.to_json()}, {"fae_checkpoint", man.inputs[fae_path]}};
  const std::size_t start = ps.step(), every = c.count("dit.checkpoint_every");
  if (o.max_steps) tc.iters = std::min(tc.iters, o.max_steps);
  fae::MetricsWriter metrics(csv, diffusion::kDiTMetricsHeader, start);
  const auto rows = diffusion::train_dit(dit, ps, latents, tc, &metrics, [&](std::size_t step, const nn::ParamStore& p) {
    if (every && step % every == 0) io::save_checkpoint(ckpt, p, meta);
  });
  io::save_checkpoint(ckpt, ps, meta);
  man.metrics = {csv};
  man.outputs = {ckpt};
  man.write(join(c.text("out_dir"), "train-dit.run.json"));
  return {{"command", "train-dit"},
          {"steps", ps.step()},
          {"resumed_from", start},
          {"final_loss", rows.empty() ? json(nullptr) : json(rows.back().loss)},
          {"checkpoint", ckpt},
          {"metrics", csv}};
}

// ---------------------------------------------------------------------------
// sample

struct SampleOptions {
  std::string fae_checkpoint, dit_checkpoint, cond, out;
  std::size_t count = 8, steps = 0, grid = 0;  // 0: config / training grid
  std::string integrator;                      // empty: config
  std::optional<std::uint64_t> seed;
};

/// Endpoint-inclusive decode grid with `points` per axis over the decoder domain.
inline fae::FunctionSample decode_grid(const fae::Fae& model, const Shape& grid) {
  const auto& dom = model.cfg.dec.domain;
  Shape vs = grid;
  vs.push_back(model.cfg.dec.output_dim);
  return fae::FunctionSample{grid, dom, model.cfg.dec.output_dim, Tensor(vs)};
}

inline fae::Dataset decode_latents(const fae::Fae& model, const nn::ParamStore& ps, const Tensor& z, const Shape& grid) {
  fae::Dataset out;
  fae::FunctionSample f = decode_grid(model, grid);
  const Tensor coords = f.coordinates();
  const std::size_t N = z.dim(1), D = z.dim(2);
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    Tensor zi({N, D}, std::vector<double>(z.ptr() + i * N * D, z.ptr() + (i + 1) * N * D));
    f.values = model.decode_at(ps, zi, coords).reshaped(f.values.shape());
    out.push(f);
  }
  if (z.dim(0) == 0) {
    out.grid_shape = grid;
    out.domain = model.cfg.dec.domain;
    out.channels = model.cfg.dec.output_dim;
  }
  return out;
}

inline json sample_cmd(const SampleOptions& o) {
  if (o.out.empty()) throw ConfigError("sample needs --out");
  require_file(o.fae_checkpoint, "autoencoder checkpoint");
  require_file(o.dit_checkpoint, "DiT checkpoint");
  const LoadedFae fae = load_fae(o.fae_checkpoint);
  const LoadedDiT dit = load_dit(o.dit_checkpoint);
  check_latent_match(fae.model.cfg, dit.model.cfg, "autoencoder checkpoint '" + o.fae_checkpoint + "'",
                     "DiT checkpoint '" + o.dit_checkpoint + "'");
  diffusion::SamplerConfig sc;
  sc.steps = o.steps ? o.steps : dit.config.count("sample.steps");
  sc.integrator = diffusion::parse_integrator(o.integrator.empty() ? dit.config.text("sample.integrator") : o.integrator);
  const std::uint64_t seed = o.seed ? *o.seed : dit.config.seed();

  std::optional<Tensor> cond;
  if (!o.cond.empty()) {
    require_file(o.cond, "condition file");
    const fae::Dataset cds = fae::load_dataset(o.cond);
    if (cds.size() != 1) throw ConfigError("condition file must hold exactly one function, got " + std::to_string(cds.size()));
    cond = fae.model.encode_one(fae.params, cds.sample(0));
  }
  Rng rng = make_rng(seed, {kSampleStream});
  const Tensor z = diffusion::sample_latents(dit.model, dit.params, sc, o.count, rng, cond ? &*cond : nullptr);

  Shape grid = geometry_stub(fae.geom).grid_shape;
  if (o.grid)
    for (auto& g : grid) g = o.grid;
  fae::Dataset out = decode_latents(fae.model, fae.params, z, grid);
  out.extra = {{"kind", "generated"}, {"seed", seed}, {"steps", sc.steps}};
  fae::save_dataset(o.out, out);
  return {{"command", "sample"}, {"count", out.size()}, {"grid_shape", out.grid_shape}, {"steps", sc.steps}, {"out", o.out}};
}

// ---------------------------------------------------------------------------
// eval-damped

inline std::string strip_json_ext(const std::string& p) {
  return p.size() > 5 && p.substr(p.size() - 5) == ".json" ? p.substr(0, p.size() - 5) : p;
}

inline json eval_damped_cmd(const std::string& samples, const std::string& out) {
  require_file(samples, "samples file");
  const fae::Dataset ds = fae::load_dataset(samples);
  if (ds.size() == 0) throw ConfigError("empty input: '" + samples + "' holds no samples");
  const bench::MetricsReport r = bench::eval_damped(ds);
  json j = bench::to_json(r);
  if (!out.empty()) {
    const std::string stem = strip_json_ext(out);
    io::write_file_atomic(out, io::dump_json(j));
    io::write_file_atomic(stem + ".hist.csv", bench::histograms_csv(r));
    io::write_file_atomic(stem + ".svg", bench::histograms_svg(r));
  }
  json s = {{"command", "eval-damped"}, {"count", r.count}, {"median_fit_mse", r.median_mse}, {"rel_l2", r.rel_l2}};
  for (std::size_t k = 0; k < 4; ++k) s["in_range_fraction"][bench::kDampedParamNames[k]] = r.in_range[k];
  return s;
}

// ---------------------------------------------------------------------------
// theory-rates

struct TheoryOptions {
  std::string decay = "poly", law = "uniform";
  double beta = 1.0, gamma = 1.0, C1 = 1.0;
  std::size_t M = 64, trials = 20;
  std::vector<std::size_t> n{16, 64, 256, 1024};
  std::uint64_t seed = 0;
  std::string out;
};

/// Passes when the decomposition and the reconstruction bound hold on every trial.
inline json theory_cmd(const TheoryOptions& o, bool* passed = nullptr) {
  theory::RKHSSpec s;
  s.decay = theory::parse_decay(o.decay);
  s.beta = o.beta;
  s.gamma = o.gamma;
  s.C1 = o.C1;
  s.M = o.M;
  s.validate();
  const auto rows = theory::rate_sweep(s, o.n, o.trials, o.seed, theory::parse_ball_law(o.law));
  std::string csv = std::string(theory::kRateHeader) + "\n";
  json jr = json::array();
  bool ok = true;
  std::vector<double> mean, sd;
  for (const auto& r : rows) {
    csv += theory::format_row(r) + "\n";
    jr.push_back({{"n", r.n}, {"D_star", r.D_star}, {"w1_mean", r.w1_mean}, {"w1_std", r.w1_std},
                  {"decomposition_holds", r.holds}, {"recon_within_bound", r.recon_ok}, {"trials", r.trials}});
    ok &= r.holds == r.trials && r.recon_ok == r.trials;
    mean.push_back(r.w1_mean);
    sd.push_back(r.w1_std);
  }
  if (!o.out.empty()) io::write_file_atomic(o.out, csv);
  std::size_t inversions = 0;
  const std::size_t large = theory::trend_violations(mean, sd, &inversions);
  if (passed) *passed = ok;
  json j = {{"command", "theory-rates"}, {"rows", jr}, {"w1_inversions", inversions}, {"w1_inversions_beyond_std", large},
            {"pass", ok}, {"out", o.out}};
  if (!ok) j["first_failure"] = "decomposition inequality or reconstruction bound violated";
  return j;
}

// ---------------------------------------------------------------------------
// gradcheck

/// Tiny 2D autoencoder whose loss exercises data and Burgers residual terms.
inline fae::FaeConfig gradcheck_fae_config() {
  fae::FaeConfig c;
  c.enc.patch_size = 4;
  c.enc.embed_dim = 16;
  c.enc.depth = 1;
  c.enc.heads = 2;
  c.enc.latent_tokens = 4;
  c.enc.mlp_width = 16;
  c.enc.latent_dim = 4;
  c.enc.base_grid = {8, 8};
  c.dec.embed_dim = 16;
  c.dec.heads = 2;
  c.dec.mlp_width = 16;
  c.dec.cross_depth = 1;
  c.dec.fourier_features = 8;
  c.dec.latent_dim = 4;
  c.dec.spatial_rank = 2;
  c.dec.domain = {{0, 1}, {0, 1}};
  return c;
}

/// One trial: fresh model and batch, `samples` parameter scalars plus a random direction.
inline double fae_loss_gradcheck_trial(std::uint64_t seed, std::size_t trial, std::size_t samples = 10) {
  Rng rng = make_rng(seed, {0x9c, trial});
  const fae::Fae model{gradcheck_fae_config()};
  nn::ParamStore ps = model.init(rng);
  fae::Dataset ds;
  for (int i = 0; i < 2; ++i) ds.push(fae::make_sample({8, 8}, {{0, 1}, {0, 1}}, 1, randn({8, 8, 1}, rng)));
  fae::FaeTrainConfig tc;
  tc.batch = 2;
  tc.queries = 6;
  tc.residual_points = 4;
  tc.downsample = {1, 2};
  tc.seed = seed + trial;
  tc.weights = {1.0, 0.1, 0.01};
  const fae::FaeBatch b = fae::make_fae_batch(ds, tc, 1);
  return gradcheck::check_params([&](const nn::ParamStore& p) { return fae::fae_loss(model, p, b, tc.weights).total; }, ps,
                                 samples, rng);
}

inline json gradcheck_cmd(std::uint64_t seed, std::size_t trials, std::size_t e2e_trials, bool* passed = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  json prims = json::object();
  double worst = 0.0;
  std::string first_fail;
  for (const auto& c : gradcheck::primitive_cases()) {
    const gradcheck::Result r = gradcheck::run_case(c, trials, seed);
    prims[r.name] = r.max_rel_err;
    worst = std::max(worst, r.max_rel_err);
    if (!(r.max_rel_err < 1e-5) && first_fail.empty()) first_fail = "primitive '" + r.name + "' rel err " + std::to_string(r.max_rel_err);
  }
  double e2e = 0.0;
  for (std::size_t t = 0; t < e2e_trials; ++t) e2e = std::max(e2e, fae_loss_gradcheck_trial(seed, t));
  if (!(e2e < 1e-4) && first_fail.empty()) first_fail = "fae_loss end-to-end rel err " + std::to_string(e2e);
  const bool ok = first_fail.empty();
  if (passed) *passed = ok;
  json j = {{"command", "gradcheck"},
            {"trials", trials},
            {"primitives", prims},
            {"max_rel_err_primitives", worst},
            {"fae_loss_trials", e2e_trials},
            {"max_rel_err_fae_loss", e2e},
            {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
            {"pass", ok}};
  if (!ok) j["first_failure"] = first_fail;
  return j;
}

}  // namespace fundiff::app
