#pragma once

// Flat `key = value` run configuration with a typed schema.

#include <cstdlib>
#include <sstream>
#include <variant>

#include <fundiff/diffusion/flow.hpp>
#include <fundiff/fae/train.hpp>

namespace fundiff::app {

enum class Kind { integer, real, boolean, text, int_list };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* fallback;
  const char* help;
};

// clang-format off
inline const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = {
      {"experiment", Kind::text, "damped", "run name"},
      {"seed", Kind::integer, "0", "master seed (FUNDIFF_SEED overrides)"},
      {"data", Kind::text, "", "training dataset file"},
      {"out_dir", Kind::text, "runs/damped", "checkpoints, metrics and manifests go here"},

      {"fae.patch_size", Kind::integer, "8", ""},
      {"fae.embed_dim", Kind::integer, "256", "encoder width"},
      {"fae.depth", Kind::integer, "6", "encoder self-attention blocks"},
      {"fae.heads", Kind::integer, "8", ""},
      {"fae.latent_tokens", Kind::integer, "16", "N"},
      {"fae.latent_dim", Kind::integer, "8", "D"},
      {"fae.mlp_width", Kind::integer, "512", ""},
      {"fae.base_grid", Kind::int_list, "128", "grid the positional table is sized for"},
      {"dec.coord_embed", Kind::text, "fourier", "fourier | grid | periodic"},
      {"dec.fourier_features", Kind::integer, "128", ""},
      {"dec.fourier_sigma", Kind::real, "6.283185307179586", ""},
      {"dec.grid_size", Kind::integer, "32", ""},
      {"dec.cross_depth", Kind::integer, "2", "decoder cross-attention blocks"},
      {"dec.embed_dim", Kind::integer, "256", ""},
      {"dec.heads", Kind::integer, "8", ""},
      {"dec.mlp_width", Kind::integer, "512", ""},
      {"dec.constraint", Kind::text, "none", "none | periodic2d | stream_function | reflect_symmetric"},
      {"dec.symmetric_mean", Kind::boolean, "false", "average instead of sum the four reflections"},

      {"fae.iters", Kind::integer, "10000", ""},
      {"fae.batch", Kind::integer, "16", ""},
      {"fae.queries", Kind::integer, "4096", "query points per sample, capped at the grid size"},
      {"fae.residual_points", Kind::integer, "1024", ""},
      {"fae.downsample", Kind::int_list, "1,2,4", "input resolution factors"},
      {"fae.w_data", Kind::real, "1", ""},
      {"fae.w_physics", Kind::real, "0", ""},
      {"fae.nu", Kind::real, "0.01", "viscosity in the Burgers residual"},
      {"fae.lr", Kind::real, "0.001", ""},
      {"fae.warmup", Kind::integer, "2000", ""},
      {"fae.decay_every", Kind::integer, "2000", ""},
      {"fae.decay_rate", Kind::real, "0.9", ""},
      {"fae.weight_decay", Kind::real, "1e-05", ""},
      {"fae.checkpoint_every", Kind::integer, "1000", ""},

      {"dit.hidden_dim", Kind::integer, "256", ""},
      {"dit.depth", Kind::integer, "8", ""},
      {"dit.heads", Kind::integer, "8", ""},
      {"dit.mlp_width", Kind::integer, "1024", ""},
      {"dit.time_embed_dim", Kind::integer, "64", ""},
      {"dit.iters", Kind::integer, "20000", ""},
      {"dit.batch", Kind::integer, "128", ""},
      {"dit.lr", Kind::real, "0.001", ""},
      {"dit.warmup", Kind::integer, "2000", ""},
      {"dit.decay_every", Kind::integer, "2000", ""},
      {"dit.decay_rate", Kind::real, "0.9", ""},
      {"dit.weight_decay", Kind::real, "1e-05", ""},
      {"dit.conditional", Kind::boolean, "false", "condition on encodings of downsampled inputs"},
      {"dit.cond_factors", Kind::int_list, "2,4", ""},
      {"dit.checkpoint_every", Kind::integer, "1000", ""},

      {"sample.steps", Kind::integer, "50", ""},
      {"sample.integrator", Kind::text, "heun", "euler | heun | rk4"},
  };
  return s;
}
// clang-format on

using Value = std::variant<long long, double, bool, std::string, std::vector<std::size_t>>;

inline const KeySpec& key_spec(const std::string& key) {
  for (const KeySpec& k : schema())
    if (key == k.key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline Value parse_value(const KeySpec& k, const std::string& raw) {
  const std::string where = "config key '" + std::string(k.key) + "'";
  try {
    std::size_t used = 0;
    switch (k.kind) {
      case Kind::integer: {
        const long long v = std::stoll(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case Kind::real: {
        const double v = std::stod(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case Kind::boolean:
        if (raw == "true") return true;
        if (raw == "false") return false;
        break;
      case Kind::text: return raw;
      case Kind::int_list: {
        std::vector<std::size_t> v;
        std::stringstream ss(raw);
        std::string item;
        while (std::getline(ss, item, ',')) {
          item = trim(item);
          const long long x = std::stoll(item, &used);
          if (used != item.size() || x <= 0) throw std::invalid_argument(item);
          v.push_back(static_cast<std::size_t>(x));
        }
        if (v.empty()) break;
        return v;
      }
    }
  } catch (const std::logic_error&) {
  }
  static const char* names[] = {"integer", "real", "true|false", "text", "comma-separated positive integers"};
  throw ConfigError(where + ": expected " + names[static_cast<int>(k.kind)] + ", got '" + raw + "'");
}

inline std::string format_value(const Value& v) {
  if (auto* i = std::get_if<long long>(&v)) return std::to_string(*i);
  if (auto* d = std::get_if<double>(&v)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  if (auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  std::string out;
  for (std::size_t x : std::get<std::vector<std::size_t>>(v)) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig() {
    for (const KeySpec& k : schema()) values_[k.key] = parse_value(k, k.fallback);
  }

  /// Parses `key = value` lines; `#` starts a comment. Unset keys keep defaults,
  /// except `seed`, which must be given here or through FUNDIFF_SEED.
  static RunConfig parse(const std::string& text, const std::string& origin = "config") {
    RunConfig c;
    bool seeded = false;
    std::stringstream ss(text);
    std::string line;
    for (std::size_t ln = 1; std::getline(ss, line); ++ln) {
      line = trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(ln) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      try {
        c.set(key, trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(ln) + ": " + e.what());
      }
      seeded |= key == "seed";
    }
    if (c.apply_env_seed()) seeded = true;
    if (!seeded) throw ConfigError(origin + ": 'seed' is mandatory (or set FUNDIFF_SEED)");
    return c;
  }

  static RunConfig load(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("config file '" + path + "' not found");
    return parse(io::read_file(path), path);
  }

  /// FUNDIFF_SEED, when set, replaces the seed.
  bool apply_env_seed() {
    const char* env = std::getenv("FUNDIFF_SEED");
    if (!env || !*env) return false;
    set("seed", env);
    return true;
  }

  void set(const std::string& key, const std::string& raw) { values_[key] = parse_value(key_spec(key), raw); }

  long long integer(const std::string& k) const { return std::get<long long>(at(k)); }
  std::size_t count(const std::string& k) const {
    const long long v = integer(k);
    if (v < 0) throw ConfigError("config key '" + k + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }
  double real(const std::string& k) const { return std::get<double>(at(k)); }
  bool flag(const std::string& k) const { return std::get<bool>(at(k)); }
  const std::string& text(const std::string& k) const { return std::get<std::string>(at(k)); }
  const std::vector<std::size_t>& list(const std::string& k) const { return std::get<std::vector<std::size_t>>(at(k)); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  /// Canonical text: every key in schema order.
  std::string dump(bool with_help = false) const {
    std::string out;
    for (const KeySpec& k : schema()) {
      if (with_help && *k.help) out += std::string("# ") + k.help + "\n";
      out += std::string(k.key) + " = " + format_value(at(k.key)) + "\n";
    }
    return out;
  }

  io::json to_json() const {
    io::json j = io::json::object();
    for (const KeySpec& k : schema()) j[k.key] = format_value(at(k.key));
    return j;
  }

  static RunConfig from_json(const io::json& j) {
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) c.set(it.key(), it.value().get<std::string>());
    return c;
  }

 private:
  const Value& at(const std::string& k) const {
    auto it = values_.find(k);
    if (it == values_.end()) throw ConfigError("unknown config key '" + k + "'");
    return it->second;
  }
  std::map<std::string, Value> values_;
};

/// 64-bit FNV-1a of the canonical dump, as hex.
inline std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : c.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Typed views.

/// FAE architecture for data with the given grid rank, domain and channels.
inline fae::FaeConfig fae_config(const RunConfig& c, const fae::Dataset& ds) {
  fae::FaeConfig f;
  f.enc.patch_size = c.count("fae.patch_size");
  f.enc.embed_dim = c.count("fae.embed_dim");
  f.enc.depth = c.count("fae.depth");
  f.enc.heads = c.count("fae.heads");
  f.enc.latent_tokens = c.count("fae.latent_tokens");
  f.enc.latent_dim = c.count("fae.latent_dim");
  f.enc.mlp_width = c.count("fae.mlp_width");
  f.enc.channels = ds.channels;
  f.enc.base_grid = c.list("fae.base_grid");
  if (f.enc.base_grid.size() == 1 && ds.grid_shape.size() == 2) f.enc.base_grid.push_back(f.enc.base_grid[0]);
  f.dec.coord_embed = fae::parse_coord_embed(c.text("dec.coord_embed"));
  f.dec.fourier_features = c.count("dec.fourier_features");
  f.dec.fourier_sigma = c.real("dec.fourier_sigma");
  f.dec.grid_size = c.count("dec.grid_size");
  f.dec.cross_depth = c.count("dec.cross_depth");
  f.dec.embed_dim = c.count("dec.embed_dim");
  f.dec.heads = c.count("dec.heads");
  f.dec.mlp_width = c.count("dec.mlp_width");
  f.dec.output_dim = ds.channels;
  f.dec.latent_dim = f.enc.latent_dim;
  f.dec.spatial_rank = ds.grid_shape.size();
  f.dec.domain = ds.domain;
  f.dec.constraint = fae::parse_constraint(c.text("dec.constraint"));
  f.dec.symmetric_mean = c.flag("dec.symmetric_mean");
  f.validate();
  return f;
}

inline fae::FaeTrainConfig fae_train_config(const RunConfig& c) {
  fae::FaeTrainConfig t;
  t.iters = c.count("fae.iters");
  t.batch = c.count("fae.batch");
  t.queries = c.count("fae.queries");
  t.residual_points = c.count("fae.residual_points");
  t.downsample = c.list("fae.downsample");
  t.weights = {c.real("fae.w_data"), c.real("fae.w_physics"), c.real("fae.nu")};
  t.schedule = {c.real("fae.lr"), c.count("fae.warmup"), c.count("fae.decay_every"), c.real("fae.decay_rate")};
  t.adamw.weight_decay = c.real("fae.weight_decay");
  t.seed = c.seed();
  return t;
}

inline diffusion::DiTConfig dit_config(const RunConfig& c) {
  diffusion::DiTConfig d;
  d.tokens = c.count("fae.latent_tokens");
  d.token_dim = c.count("fae.latent_dim");
  d.hidden_dim = c.count("dit.hidden_dim");
  d.depth = c.count("dit.depth");
  d.heads = c.count("dit.heads");
  d.mlp_width = c.count("dit.mlp_width");
  d.time_embed_dim = c.count("dit.time_embed_dim");
  d.validate();
  return d;
}

inline diffusion::DiTTrainConfig dit_train_config(const RunConfig& c) {
  diffusion::DiTTrainConfig t;
  t.iters = c.count("dit.iters");
  t.batch = c.count("dit.batch");
  t.schedule = {c.real("dit.lr"), c.count("dit.warmup"), c.count("dit.decay_every"), c.real("dit.decay_rate")};
  t.adamw.weight_decay = c.real("dit.weight_decay");
  t.seed = c.seed();
  t.conditional = c.flag("dit.conditional");
  return t;
}

}  // namespace fundiff::app
