#include <iostream>

#include <CLI11.hpp>

#include <fundiff/app/commands.hpp>

using namespace fundiff;
using app::json;

namespace {

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = app::trim(item);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("expected a comma-separated list of non-negative integers, got '" + s + "'");
    out.push_back(std::stoull(item));
  }
  return out;
}

/// Config file (or defaults), then --set overrides, then FUNDIFF_SEED.
app::RunConfig build_config(const std::string& path, const std::vector<std::string>& sets,
                            const std::map<std::string, std::string>& flags) {
  if (!path.empty() && !std::filesystem::exists(path)) throw IoError("config file '" + path + "' not found");
  std::string text = path.empty() ? std::string() : io::read_file(path);
  for (const auto& s : sets) text += "\n" + s;
  for (const auto& [k, v] : flags) text += "\n" + k + " = " + v;
  return app::RunConfig::parse(text, path.empty() ? "command line" : path);
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* env = std::getenv("FUNDIFF_SEED");
  return env && *env ? std::stoull(env) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"fundiff: function autoencoders, latent rectified flow and theory audits"};
  cli.require_subcommand(1);

  // gen-data <kind>
  app::GenDataOptions gd;
  auto* gen = cli.add_subcommand("gen-data", "generate a dataset file");
  gen->add_option("kind", gd.kind, "damped | burgers | grf")->required();
  gen->add_option("--n", gd.n, "number of samples");
  gen->add_option("--grid", gd.grid, "points per axis");
  gen->add_option("--seed", gd.seed)->required();
  gen->add_option("--nu", gd.nu, "Burgers viscosity");
  gen->add_option("--T", gd.T, "Burgers final time");
  gen->add_option("--out", gd.out)->required();

  // train-fae
  std::string config_path, data, out_dir, downsample, fae_ckpt;
  std::vector<std::string> sets;
  app::TrainOptions to;
  std::optional<std::size_t> iters, batch;
  std::optional<std::uint64_t> seed;
  auto* tf = cli.add_subcommand("train-fae", "train the function autoencoder");
  tf->add_option("config", config_path, "config file")->required();
  tf->add_option("--data", data);
  tf->add_option("--out-dir", out_dir);
  tf->add_option("--downsample-set", downsample, "e.g. 1,2,4");
  tf->add_option("--iters", iters);
  tf->add_option("--seed", seed);
  tf->add_option("--set", sets, "key=value override");
  tf->add_flag("--resume", to.resume, "continue from <out_dir>/fae.ckpt");
  tf->add_option("--max-steps", to.max_steps, "stop after this step");

  // train-dit
  auto* td = cli.add_subcommand("train-dit", "train the latent DiT");
  td->add_option("--config", config_path);
  td->add_option("--fae", fae_ckpt, "autoencoder checkpoint")->required();
  td->add_option("--data", data);
  td->add_option("--out-dir", out_dir);
  td->add_option("--iters", iters);
  td->add_option("--batch", batch);
  td->add_option("--seed", seed);
  td->add_option("--set", sets, "key=value override");
  td->add_flag("--resume", to.resume);
  td->add_option("--max-steps", to.max_steps);

  // sample
  app::SampleOptions so;
  std::optional<std::uint64_t> sample_seed;
  auto* sm = cli.add_subcommand("sample", "generate functions");
  sm->add_option("--fae", so.fae_checkpoint)->required();
  sm->add_option("--dit", so.dit_checkpoint)->required();
  sm->add_option("--count", so.count);
  sm->add_option("--steps", so.steps);
  sm->add_option("--integrator", so.integrator, "euler | heun | rk4");
  sm->add_option("--grid", so.grid, "decode grid points per axis");
  sm->add_option("--seed", sample_seed);
  sm->add_option("--cond", so.cond, "dataset file holding one conditioning function");
  sm->add_option("--out", so.out)->required();

  // eval-damped
  std::string samples, report;
  auto* ev = cli.add_subcommand("eval-damped", "fit damped sinusoids to samples");
  ev->add_option("--samples", samples)->required();
  ev->add_option("--out", report);

  // theory-rates
  app::TheoryOptions th;
  std::string n_list = "16,64,256,1024";
  auto* tr = cli.add_subcommand("theory-rates", "RKHS rate sweep");
  tr->add_option("--decay", th.decay, "poly | exp");
  tr->add_option("--beta", th.beta);
  tr->add_option("--gamma", th.gamma);
  tr->add_option("--C1", th.C1);
  tr->add_option("--M", th.M);
  tr->add_option("--n", n_list);
  tr->add_option("--trials", th.trials);
  tr->add_option("--law", th.law, "uniform | sparse | two_cluster");
  tr->add_option("--seed", th.seed);
  tr->add_option("--out", th.out);

  // gradcheck
  std::size_t gc_trials = 100, gc_e2e = 100;
  std::uint64_t gc_seed = 0;
  auto* gc = cli.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--trials", gc_trials);
  gc->add_option("--e2e-trials", gc_e2e);
  gc->add_option("--seed", gc_seed);

  // config-dump
  bool with_help = false;
  auto* cd = cli.add_subcommand("config-dump", "print a config (defaults when none given)");
  cd->add_option("config", config_path);
  cd->add_flag("--help-text", with_help, "annotate keys");

  CLI11_PARSE(cli, argc, argv);

  try {
    json out;
    bool ok = true;
    std::map<std::string, std::string> flags;
    if (!data.empty()) flags["data"] = data;
    if (!out_dir.empty()) flags["out_dir"] = out_dir;
    if (seed) flags["seed"] = std::to_string(*seed);

    if (*gen) {
      gd.seed = env_seed(gd.seed);
      out = app::gen_data_cmd(gd);
    } else if (*tf) {
      if (!downsample.empty()) flags["fae.downsample"] = downsample;
      if (iters) flags["fae.iters"] = std::to_string(*iters);
      out = app::train_fae_cmd(build_config(config_path, sets, flags), to);
    } else if (*td) {
      if (iters) flags["dit.iters"] = std::to_string(*iters);
      if (batch) flags["dit.batch"] = std::to_string(*batch);
      if (config_path.empty()) {
        // Architecture comes from the autoencoder checkpoint's stored config.
        app::RunConfig base = app::load_fae(fae_ckpt).config;
        std::string text = base.dump();
        for (const auto& s : sets) text += "\n" + s;
        for (const auto& [k, v] : flags) text += "\n" + k + " = " + v;
        to.fae_checkpoint = fae_ckpt;
        out = app::train_dit_cmd(app::RunConfig::parse(text, "command line"), to);
      } else {
        to.fae_checkpoint = fae_ckpt;
        out = app::train_dit_cmd(build_config(config_path, sets, flags), to);
      }
    } else if (*sm) {
      if (sample_seed) so.seed = *sample_seed;
      if (const char* env = std::getenv("FUNDIFF_SEED"); env && *env) so.seed = std::stoull(env);
      out = app::sample_cmd(so);
    } else if (*ev) {
      out = app::eval_damped_cmd(samples, report);
    } else if (*tr) {
      th.n = parse_list(n_list);
      th.seed = env_seed(th.seed);
      out = app::theory_cmd(th, &ok);
    } else if (*gc) {
      out = app::gradcheck_cmd(env_seed(gc_seed), gc_trials, gc_e2e, &ok);
    } else if (*cd) {
      app::RunConfig c;
      if (!config_path.empty()) c = app::RunConfig::load(config_path);
      std::cout << c.dump(with_help);
      return 0;
    }
    std::cout << out.dump(2) << "\n";
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump(2) << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
