#pragma once

#include <map>
#include <random>

#include <fundiff/core/autodiff.hpp>

namespace fundiff {

using Rng = std::mt19937_64;

/// Deterministic generator for (seed, stream...) tuples, e.g. (seed, step).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> streams = {}) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t s : streams) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline Tensor randn(Shape shape, Rng& rng, double std = 1.0) {
  std::normal_distribution<double> dist(0.0, std);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor rand_uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Normal(0, std) truncated to two standard deviations.
inline Tensor trunc_normal(Shape shape, Rng& rng, double std = 0.02) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    double z;
    do z = dist(rng);
    while (std::abs(z) > 2.0);
    v = z * std;
  }
  return t;
}

}  // namespace fundiff

namespace fundiff::nn {

using ad::Var;

struct Param {
  Var var;
  Tensor m;  // first moment
  Tensor v;  // second moment
  bool trainable = true;
};

/// Named parameters (dotted paths) with their optimizer moments.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& o) : step_(o.step_) {
    for (const auto& [k, p] : o.params_)
      params_.emplace(k, Param{ad::Var(p.var.value(), p.var.requires_grad()), p.m, p.v, p.trainable});
  }
  ParamStore& operator=(const ParamStore& o) {
    if (this != &o) {
      ParamStore tmp(o);
      *this = std::move(tmp);
    }
    return *this;
  }
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  void add(const std::string& name, Tensor init, bool trainable = true) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    const Shape s = init.shape();
    params_.emplace(name, Param{ad::Var(std::move(init), trainable), Tensor(s), Tensor(s), trainable});
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Var& operator[](const std::string& name) const { return get(name).var; }

  const Param& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }
  Param& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }

  Tensor& value(const std::string& name) { return get(name).var.mutable_value(); }

  std::map<std::string, Param>& params() { return params_; }
  const std::map<std::string, Param>& params() const { return params_; }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [k, p] : params_) n += p.var.size();
    return n;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [k, p] : params_)
      if (p.trainable) out.push_back(k);
    return out;
  }

  std::size_t step() const { return step_; }
  void set_step(std::size_t s) { step_ = s; }

  /// Moves every entry of `other` into this store under `prefix + name`.
  void merge(const ParamStore& other, const std::string& prefix = "") {
    for (const auto& [k, p] : other.params_) {
      if (params_.count(prefix + k)) throw ConfigError("duplicate parameter name '" + prefix + k + "'");
      params_.emplace(prefix + k, Param{ad::Var(p.var.value(), p.var.requires_grad()), p.m, p.v, p.trainable});
    }
  }

 private:
  std::map<std::string, Param> params_;
  std::size_t step_ = 0;
};

using GradMap = std::map<std::string, Tensor>;

/// Evaluates `program` and returns its value plus exact reverse-mode gradients
/// for every trainable parameter, seeded with `seed_output` (ones if empty).
template <class Program>
std::pair<Tensor, GradMap> evaluate_with_gradients(Program&& program, const ParamStore& store,
                                                   const std::optional<Tensor>& seed_output = std::nullopt) {
  Var out = program(store);
  std::vector<std::string> names = store.trainable_names();
  std::vector<Var> wrt;
  for (const auto& n : names) wrt.push_back(store[n]);
  std::vector<Var> seeds;
  if (seed_output) {
    if (seed_output->shape() != out.shape()) throw ShapeError("seed/output shape", seed_output->shape(), out.shape());
    seeds.push_back(ad::constant(*seed_output));
  }
  std::vector<Var> gs = ad::grad({out}, wrt, seeds, false);
  GradMap gm;
  for (std::size_t i = 0; i < names.size(); ++i) gm.emplace(names[i], gs[i].value());
  return {out.value(), std::move(gm)};
}

// ---------------------------------------------------------------------------
// Layers. Each layer is a small value type holding its parameter prefix and
// dimensions; parameters themselves live in a ParamStore.

struct Linear {
  std::string name;
  std::size_t in = 0, out = 0;
  bool bias = true;

  void init(ParamStore& ps, Rng& rng, bool zero = false) const {
    ps.add(name + ".weight", zero ? Tensor({in, out}) : trunc_normal({in, out}, rng));
    if (bias) ps.add(name + ".bias", Tensor({out}));
  }
  Var operator()(const ParamStore& ps, const Var& x) const {
    Var y = ad::matmul(x, ps[name + ".weight"]);
    return bias ? ad::add(y, ps[name + ".bias"]) : y;
  }
};

struct LayerNorm {
  std::string name;
  std::size_t dim = 0;
  bool affine = true;
  double eps = 1e-6;

  void init(ParamStore& ps) const {
    if (!affine) return;
    ps.add(name + ".gamma", Tensor::ones({dim}));
    ps.add(name + ".beta", Tensor({dim}));
  }
  Var operator()(const ParamStore& ps, const Var& x) const {
    if (!affine) return ad::layer_norm(x, nullptr, nullptr, eps);
    const Var& g = ps[name + ".gamma"];
    const Var& b = ps[name + ".beta"];
    return ad::layer_norm(x, &g, &b, eps);
  }
};

struct Mlp {
  std::string name;
  std::size_t in = 0, hidden = 0, out = 0;

  Linear fc1() const { return {name + ".fc1", in, hidden}; }
  Linear fc2() const { return {name + ".fc2", hidden, out}; }
  void init(ParamStore& ps, Rng& rng) const {
    fc1().init(ps, rng);
    fc2().init(ps, rng);
  }
  Var operator()(const ParamStore& ps, const Var& x) const { return fc2()(ps, ad::gelu(fc1()(ps, x))); }
};

inline void check_heads(std::size_t dim, std::size_t heads) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("attention width " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
}

// (..., L, D) -> (B, h, L, D/h) with the leading axes flattened into B.
inline Var split_heads(const Var& x, std::size_t heads) {
  const std::size_t L = x.dim(-2), D = x.dim(-1);
  const std::size_t B = x.size() / (L * D);
  return ad::permute(ad::reshape(x, {B, L, heads, D / heads}), {0, 2, 1, 3});
}

inline Var merge_heads(const Var& x, const Shape& lead) {
  const std::size_t h = x.dim(1), L = x.dim(2), dh = x.dim(3);
  Shape s = lead;
  s.push_back(L);
  s.push_back(h * dh);
  return ad::reshape(ad::permute(x, {0, 2, 1, 3}), s);
}

/// Multi-head scaled dot-product attention without projections. Logits are
/// scaled by 1/sqrt(d/heads); each output row is a convex combination of the
/// rows of `v` within its head.
inline Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  const std::size_t d = q.dim(-1);
  check_heads(d, heads);
  check_heads(v.dim(-1), heads);
  if (k.dim(-1) != d) throw ShapeError("attention query/key width", q.shape(), k.shape());
  if (k.dim(-2) != v.dim(-2)) throw ShapeError("attention key/value length", k.shape(), v.shape());
  const Shape lead(q.shape().begin(), q.shape().end() - 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / heads));
  Var qh = split_heads(q, heads);
  Var kh = split_heads(k, heads);
  Var vh = split_heads(v, heads);
  Var w = ad::softmax(ad::mul_scalar(ad::matmul(qh, ad::transpose(kh)), scale));
  return merge_heads(ad::matmul(w, vh), lead);
}

struct MultiHeadAttention {
  std::string name;
  std::size_t dim = 0, heads = 1;

  Linear proj(const char* which) const { return {name + "." + which, dim, dim}; }
  void init(ParamStore& ps, Rng& rng) const {
    check_heads(dim, heads);
    for (const char* w : {"q", "k", "v", "o"}) proj(w).init(ps, rng);
  }
  Var operator()(const ParamStore& ps, const Var& xq, const Var& xkv) const {
    Var a = scaled_dot_attention(proj("q")(ps, xq), proj("k")(ps, xkv), proj("v")(ps, xkv), heads);
    return proj("o")(ps, a);
  }
};

}  // namespace fundiff::nn
