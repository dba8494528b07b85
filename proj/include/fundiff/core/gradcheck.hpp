#pragma once

// Central finite-difference checks of reverse-mode gradients.

#include <functional>

#include <fundiff/core/nn.hpp>

namespace fundiff::gradcheck {

using ad::Var;
using Program = std::function<Var(const std::vector<Var>&)>;

/// Normwise relative error ||a - b||_inf / max(||a||_inf, ||b||_inf, floor).
inline double rel_err(const Tensor& a, const Tensor& b, double floor = 1e-10) {
  return max_abs_diff(a, b) / std::max({max_abs(a), max_abs(b), floor});
}

/// Projects f(inputs) onto fixed random weights w and compares d<w, f>/dx_i from
/// autodiff with central differences of step h. Returns the worst input error.
inline double check(const Program& f, const std::vector<Tensor>& inputs, Rng& rng, double h = 1e-6) {
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(ad::leaf(t));
  Var out = f(leaves);
  const Tensor w = randn(out.shape(), rng);
  const Var loss = ad::sum(ad::mul(out, ad::constant(w)));
  const std::vector<Var> g = ad::grad({loss}, leaves);

  auto eval = [&](const std::vector<Tensor>& xs) {
    // Leaves, not constants: programs may differentiate internally.
    std::vector<Var> vs;
    for (const Tensor& t : xs) vs.push_back(ad::leaf(t));
    const Tensor y = f(vs).value();
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
  };
  double worst = 0.0;
  std::vector<Tensor> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Tensor fd(xs[k].shape());
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double x0 = xs[k][i];
      xs[k][i] = x0 + h;
      const double fp = eval(xs);
      xs[k][i] = x0 - h;
      const double fm = eval(xs);
      xs[k][i] = x0;
      fd[i] = (fp - fm) / (2.0 * h);
    }
    worst = std::max(worst, rel_err(g[k].value(), fd));
  }
  return worst;
}

/// Checks the gradient of a scalar program over a ParamStore: `samples` random
/// trainable scalars compared normwise against central differences, plus one
/// random directional derivative over all parameters. Returns the worse error.
inline double check_params(const std::function<Var(const nn::ParamStore&)>& f, nn::ParamStore& ps,
                           std::size_t samples, Rng& rng, double h = 1e-6) {
  auto [value, grads] = nn::evaluate_with_gradients(f, ps);
  auto eval = [&] { return f(ps).item(); };
  std::vector<std::pair<std::string, std::size_t>> slots;
  for (const auto& name : ps.trainable_names())
    for (std::size_t i = 0; i < ps.get(name).var.size(); ++i) slots.emplace_back(name, i);
  Tensor ad_sub({samples}), fd_sub({samples});
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& [name, i] = slots[std::uniform_int_distribution<std::size_t>(0, slots.size() - 1)(rng)];
    double& x = ps.value(name)[i];
    const double x0 = x;
    x = x0 + h;
    const double fp = eval();
    x = x0 - h;
    const double fm = eval();
    x = x0;
    fd_sub[s] = (fp - fm) / (2 * h);
    ad_sub[s] = grads.at(name)[i];
  }
  double worst = rel_err(ad_sub, fd_sub);

  std::map<std::string, Tensor> dir;
  double ad_dir = 0.0;
  for (const auto& name : ps.trainable_names()) {
    dir[name] = randn(ps.get(name).var.shape(), rng);
    for (std::size_t i = 0; i < dir[name].size(); ++i) ad_dir += dir[name][i] * grads.at(name)[i];
  }
  auto shifted = [&](double t) {
    for (auto& [name, d] : dir)
      for (std::size_t i = 0; i < d.size(); ++i) ps.value(name)[i] += t * d[i];
  };
  shifted(h);
  const double fp = eval();
  shifted(-2 * h);
  const double fm = eval();
  shifted(h);
  const double fd_dir = (fp - fm) / (2 * h);
  worst = std::max(worst, std::abs(ad_dir - fd_dir) / std::max({std::abs(ad_dir), std::abs(fd_dir), 1e-10}));
  return worst;
}

struct Result {
  std::string name;
  std::size_t trials = 0;
  double max_rel_err = 0.0;
};

struct Case {
  std::string name;
  // Builds a program and matching random inputs for one trial.
  std::function<std::pair<Program, std::vector<Tensor>>(Rng&)> make;
};

inline Result run_case(const Case& c, std::size_t trials, std::uint64_t seed) {
  Result r{c.name, trials, 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, {std::hash<std::string>{}(c.name), t});
    auto [prog, inputs] = c.make(rng);
    r.max_rel_err = std::max(r.max_rel_err, check(prog, inputs, rng));
  }
  return r;
}

namespace detail {

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Shape random_shape(Rng& rng, std::size_t max_rank = 3, std::size_t max_dim = 4) {
  Shape s(pick(rng, 1, max_rank));
  for (auto& d : s) d = pick(rng, 1, max_dim);
  return s;
}

// A shape that broadcasts against `s`: random suffix with some axes set to 1.
inline Shape broadcast_partner(Rng& rng, const Shape& s) {
  Shape b(s.begin() + static_cast<std::ptrdiff_t>(pick(rng, 0, s.size() - 1)), s.end());
  for (auto& d : b)
    if (pick(rng, 0, 2) == 0) d = 1;
  return b;
}

// Values bounded away from zero, for kinks and poles.
inline Tensor away_from_zero(Shape s, Rng& rng, double lo, double hi) {
  Tensor t = rand_uniform(std::move(s), rng, lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data())
    if (sign(rng)) v = -v;
  return t;
}

}  // namespace detail

/// One case per differentiable primitive.
inline std::vector<Case> primitive_cases() {
  using detail::pick;
  using detail::random_shape;
  using P = std::pair<Program, std::vector<Tensor>>;
  std::vector<Case> cs;
  auto binary = [&](std::string name, std::function<Var(const Var&, const Var&)> op, bool positive_rhs) {
    cs.push_back({name, [op, positive_rhs](Rng& rng) {
                    Shape a = random_shape(rng);
                    Shape b = detail::broadcast_partner(rng, a);
                    if (pick(rng, 0, 1)) std::swap(a, b);
                    Tensor tb = positive_rhs ? detail::away_from_zero(b, rng, 0.5, 2.0) : randn(b, rng);
                    return P{[op](const std::vector<Var>& v) { return op(v[0], v[1]); }, {randn(a, rng), tb}};
                  }});
  };
  binary("add", [](const Var& a, const Var& b) { return ad::add(a, b); }, false);
  binary("sub", [](const Var& a, const Var& b) { return ad::sub(a, b); }, false);
  binary("mul", [](const Var& a, const Var& b) { return ad::mul(a, b); }, false);
  binary("div", [](const Var& a, const Var& b) { return ad::div(a, b); }, true);

  auto unary = [&](std::string name, std::function<Var(const Var&)> op, std::function<Tensor(Shape, Rng&)> gen) {
    cs.push_back({name, [op, gen](Rng& rng) {
                    return P{[op](const std::vector<Var>& v) { return op(v[0]); }, {gen(random_shape(rng), rng)}};
                  }});
  };
  auto normal = [](Shape s, Rng& rng) { return randn(std::move(s), rng); };
  auto positive = [](Shape s, Rng& rng) { return rand_uniform(std::move(s), rng, 0.3, 3.0); };
  auto nonzero = [](Shape s, Rng& rng) { return detail::away_from_zero(std::move(s), rng, 0.05, 2.0); };
  unary("neg", [](const Var& a) { return ad::neg(a); }, normal);
  unary("add_scalar", [](const Var& a) { return ad::add_scalar(a, 0.7); }, normal);
  unary("mul_scalar", [](const Var& a) { return ad::mul_scalar(a, -1.3); }, normal);
  unary("exp", [](const Var& a) { return ad::exp(a); }, normal);
  unary("log", [](const Var& a) { return ad::log(a); }, positive);
  unary("sin", [](const Var& a) { return ad::sin(a); }, normal);
  unary("cos", [](const Var& a) { return ad::cos(a); }, normal);
  unary("tanh", [](const Var& a) { return ad::tanh(a); }, normal);
  unary("sqrt", [](const Var& a) { return ad::sqrt(a); }, positive);
  unary("pow", [](const Var& a) { return ad::pow(a, 2.5); }, positive);
  unary("relu", [](const Var& a) { return ad::relu(a); }, nonzero);
  unary("erf", [](const Var& a) { return ad::erf(a); }, normal);
  unary("gelu", [](const Var& a) { return ad::gelu(a); }, normal);
  unary("softmax", [](const Var& a) { return ad::softmax(a); }, normal);
  unary("sum_all", [](const Var& a) { return ad::sum(a); }, normal);
  unary("mean_all", [](const Var& a) { return ad::mean(a); }, normal);

  cs.push_back({"sum_axis", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  const int ax = static_cast<int>(pick(rng, 0, s.size() - 1));
                  const bool keep = pick(rng, 0, 1);
                  return P{[ax, keep](const std::vector<Var>& v) { return ad::sum(v[0], ax, keep); }, {randn(s, rng)}};
                }});
  cs.push_back({"mean_axis", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  const int ax = static_cast<int>(pick(rng, 0, s.size() - 1));
                  return P{[ax](const std::vector<Var>& v) { return ad::mean(v[0], ax, true); }, {randn(s, rng)}};
                }});
  cs.push_back({"broadcast_to", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  Shape b = detail::broadcast_partner(rng, s);
                  return P{[s](const std::vector<Var>& v) { return ad::broadcast_to(v[0], s); }, {randn(b, rng)}};
                }});
  cs.push_back({"reshape", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  return P{[n = shape_numel(s)](const std::vector<Var>& v) { return ad::reshape(v[0], {n}); },
                           {randn(s, rng)}};
                }});
  cs.push_back({"permute", [](Rng& rng) {
                  Shape s = random_shape(rng, 4);
                  std::vector<std::size_t> axes(s.size());
                  std::iota(axes.begin(), axes.end(), std::size_t{0});
                  std::shuffle(axes.begin(), axes.end(), rng);
                  return P{[axes](const std::vector<Var>& v) { return ad::permute(v[0], axes); }, {randn(s, rng)}};
                }});
  cs.push_back({"matmul", [](Rng& rng) {
                  const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4), b = pick(rng, 1, 3);
                  const bool batched_b = pick(rng, 0, 1);
                  Shape sb = batched_b ? Shape{b, k, n} : Shape{k, n};
                  return P{[](const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); },
                           {randn({b, m, k}, rng), randn(sb, rng)}};
                }});
  cs.push_back({"slice", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  const int ax = static_cast<int>(pick(rng, 0, s.size() - 1));
                  const std::size_t start = pick(rng, 0, s[ax] - 1);
                  const std::size_t len = pick(rng, 1, s[ax] - start);
                  return P{[=](const std::vector<Var>& v) { return ad::slice(v[0], ax, start, len); }, {randn(s, rng)}};
                }});
  cs.push_back({"concat", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  const int ax = static_cast<int>(pick(rng, 0, s.size() - 1));
                  Shape s2 = s;
                  s2[ax] = pick(rng, 1, 3);
                  return P{[ax](const std::vector<Var>& v) { return ad::concat({v[0], v[1]}, ax); },
                           {randn(s, rng), randn(s2, rng)}};
                }});
  cs.push_back({"gather_rows", [](Rng& rng) {
                  const std::size_t rows = pick(rng, 1, 5), cols = pick(rng, 1, 3);
                  std::vector<std::size_t> idx(pick(rng, 1, 6));
                  for (auto& i : idx) i = pick(rng, 0, rows - 1);
                  return P{[idx](const std::vector<Var>& v) { return ad::gather_rows(v[0], idx); },
                           {randn({rows, cols}, rng)}};
                }});
  cs.push_back({"layer_norm", [](Rng& rng) {
                  Shape s = random_shape(rng);
                  s.back() = pick(rng, 3, 8);
                  const std::size_t d = s.back();
                  return P{[](const std::vector<Var>& v) { return ad::layer_norm(v[0], &v[1], &v[2]); },
                           {randn(s, rng), randn({d}, rng), randn({d}, rng)}};
                }});
  cs.push_back({"attention", [](Rng& rng) {
                  const std::size_t heads = pick(rng, 1, 2);
                  const std::size_t d = heads * pick(rng, 1, 3);
                  const std::size_t lq = pick(rng, 1, 4), lk = pick(rng, 1, 4);
                  return P{[heads](const std::vector<Var>& v) { return nn::scaled_dot_attention(v[0], v[1], v[2], heads); },
                           {randn({lq, d}, rng), randn({lk, d}, rng), randn({lk, d}, rng)}};
                }});
  return cs;
}

}  // namespace fundiff::gradcheck
