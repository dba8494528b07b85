#pragma once

// Define-by-run reverse-mode automatic differentiation.
//
// Every primitive records a Node holding its value, its inputs and a backward
// rule. Backward rules are written with the same differentiable primitives, so
// a gradient computed with `create_graph = true` is itself a recorded Var and
// can be differentiated again (needed for stream-function velocities, PDE
// residuals and losses built on top of them).

#include <atomic>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <unordered_map>

#include <fundiff/core/kernels.hpp>

namespace fundiff::ad {

class Var;
struct Node;

namespace detail {
inline thread_local int no_grad_depth = 0;
inline thread_local std::vector<std::string> scope_stack;
inline std::atomic<std::uint64_t> next_seq{0};
}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Disables recording for its lifetime; values are still computed.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Re-enables recording inside a NoGradGuard region.
class EnableGradGuard {
 public:
  EnableGradGuard() : saved_(detail::no_grad_depth) { detail::no_grad_depth = 0; }
  ~EnableGradGuard() { detail::no_grad_depth = saved_; }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  int saved_;
};

/// Names the nodes created in its lifetime; used in non-finite error reports.
class NameScope {
 public:
  explicit NameScope(std::string name) { detail::scope_stack.push_back(std::move(name)); }
  ~NameScope() { detail::scope_stack.pop_back(); }
  NameScope(const NameScope&) = delete;
  NameScope& operator=(const NameScope&) = delete;
};

inline std::string current_scope() {
  std::string s;
  for (const auto& p : detail::scope_stack) s += (s.empty() ? "" : ".") + p;
  return s;
}

using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad)>;

struct Node : std::enable_shared_from_this<Node> {
  Tensor value;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* op = "leaf";
  std::uint64_t seq = 0;
  bool requires_grad = false;
};

class Var {
 public:
  Var() : Var(Tensor{}) {}
  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_seq.fetch_add(1, std::memory_order_relaxed);
  }
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(int axis) const { return node_->value.dim(axis); }
  std::size_t rank() const { return node_->value.rank(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Node& node() const { return *node_; }
  Node* node_ptr() const { return node_.get(); }
  const Var& input(std::size_t i) const { return node_->inputs[i]; }
  double item() const { return node_->value.item(); }

  // Leaf values are mutated in place by optimizers between steps.
  Tensor& mutable_value() { return node_->value; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }
inline Var constant(double v) { return Var(Tensor::scalar(v), false); }
inline Var leaf(Tensor t) { return Var(std::move(t), true); }
inline Var detach(const Var& v) { return Var(v.value(), false); }

inline Var make_result(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn bw) {
  if (!value.all_finite()) {
    const std::string scope = current_scope();
    throw NonFiniteError(scope.empty() ? std::string(op) : scope + "/" + op);
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->seq = detail::next_seq.fetch_add(1, std::memory_order_relaxed);
  if (grad_enabled()) {
    for (const Var& v : inputs) n->requires_grad = n->requires_grad || v.requires_grad();
  }
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

// ---------------------------------------------------------------------------
// Primitive declarations (definitions below, after the shape helpers).

inline Var add(const Var& a, const Var& b);
inline Var sub(const Var& a, const Var& b);
inline Var mul(const Var& a, const Var& b);
inline Var div(const Var& a, const Var& b);
inline Var neg(const Var& a);
inline Var add_scalar(const Var& a, double s);
inline Var mul_scalar(const Var& a, double s);
inline Var broadcast_to(const Var& a, const Shape& s);
inline Var sum_to(const Var& a, const Shape& s);
inline Var reshape(const Var& a, const Shape& s);
inline Var permute(const Var& a, const std::vector<std::size_t>& axes);
inline Var transpose(const Var& a, int ax0 = -2, int ax1 = -1);
inline Var matmul(const Var& a, const Var& b);
inline Var slice(const Var& a, int axis, std::size_t start, std::size_t len);
inline Var embed(const Var& a, int axis, std::size_t start, std::size_t full_len);
inline Var concat(const std::vector<Var>& parts, int axis);
inline Var gather_rows(const Var& a, const std::vector<std::size_t>& idx);
inline Var scatter_add_rows(const Var& a, const std::vector<std::size_t>& idx, std::size_t rows);
inline Var sum(const Var& a, int axis, bool keepdim = false);
inline Var sum(const Var& a);
inline Var mean(const Var& a, int axis, bool keepdim = false);
inline Var mean(const Var& a);
inline Var exp(const Var& a);
inline Var log(const Var& a);
inline Var sin(const Var& a);
inline Var cos(const Var& a);
inline Var tanh(const Var& a);
inline Var sqrt(const Var& a);
inline Var pow(const Var& a, double p);
inline Var relu(const Var& a);
inline Var erf(const Var& a);
inline Var gelu(const Var& a);
inline Var softmax(const Var& a);
inline Var layer_norm(const Var& x, const Var* gamma, const Var* beta, double eps = 1e-6);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator+(double s, const Var& a) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }
inline Var operator-(double s, const Var& a) { return add_scalar(neg(a), s); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }
inline Var operator/(const Var& a, double s) { return mul_scalar(a, 1.0 / s); }

inline Var square(const Var& a) { return mul(a, a); }
inline Var sigmoid(const Var& a) { return add_scalar(mul_scalar(tanh(mul_scalar(a, 0.5)), 0.5), 0.5); }
inline Var silu(const Var& a) { return mul(a, sigmoid(a)); }
inline Var unsqueeze(const Var& a, int axis) {
  Shape s = a.shape();
  const int r = static_cast<int>(s.size()) + 1;
  const int ax = axis < 0 ? axis + r : axis;
  s.insert(s.begin() + ax, 1);
  return reshape(a, s);
}

// ---------------------------------------------------------------------------
// Definitions.

namespace detail {
inline std::size_t norm_axis(const Var& a, int axis) { return a.value().normalize_axis(axis); }
inline bool needs(const Var& out, std::size_t i) { return out.input(i).requires_grad(); }
}  // namespace detail

inline Var broadcast_to(const Var& a, const Shape& s) {
  if (a.shape() == s) return a;
  return make_result("broadcast_to", kernels::broadcast_to(a.value(), s), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{sum_to(g, out.input(0).shape())}; });
}

inline Var sum_to(const Var& a, const Shape& s) {
  if (a.shape() == s) return a;
  return make_result("sum_to", kernels::sum_to(a.value(), s), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{broadcast_to(g, out.input(0).shape())}; });
}

inline Var add(const Var& a, const Var& b) {
  return make_result("add", kernels::binary(a.value(), b.value(), std::plus<>()), {a, b},
                     [](const Var& out, const Var& g) {
                       return std::vector<Var>{detail::needs(out, 0) ? sum_to(g, out.input(0).shape()) : Var(),
                                               detail::needs(out, 1) ? sum_to(g, out.input(1).shape()) : Var()};
                     });
}

inline Var sub(const Var& a, const Var& b) {
  return make_result("sub", kernels::binary(a.value(), b.value(), std::minus<>()), {a, b},
                     [](const Var& out, const Var& g) {
                       return std::vector<Var>{detail::needs(out, 0) ? sum_to(g, out.input(0).shape()) : Var(),
                                               detail::needs(out, 1) ? neg(sum_to(g, out.input(1).shape())) : Var()};
                     });
}

inline Var mul(const Var& a, const Var& b) {
  return make_result("mul", kernels::binary(a.value(), b.value(), std::multiplies<>()), {a, b},
                     [](const Var& out, const Var& g) {
                       const Var& x = out.input(0);
                       const Var& y = out.input(1);
                       return std::vector<Var>{detail::needs(out, 0) ? sum_to(mul(g, y), x.shape()) : Var(),
                                               detail::needs(out, 1) ? sum_to(mul(g, x), y.shape()) : Var()};
                     });
}

inline Var div(const Var& a, const Var& b) {
  return make_result("div", kernels::binary(a.value(), b.value(), std::divides<>()), {a, b},
                     [](const Var& out, const Var& g) {
                       const Var& x = out.input(0);
                       const Var& y = out.input(1);
                       return std::vector<Var>{
                           detail::needs(out, 0) ? sum_to(div(g, y), x.shape()) : Var(),
                           detail::needs(out, 1) ? sum_to(neg(div(mul(g, out), y)), y.shape()) : Var()};
                     });
}

inline Var neg(const Var& a) {
  return make_result("neg", kernels::unary(a.value(), [](double v) { return -v; }), {a},
                     [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

inline Var add_scalar(const Var& a, double s) {
  return make_result("add_scalar", kernels::unary(a.value(), [s](double v) { return v + s; }), {a},
                     [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

inline Var mul_scalar(const Var& a, double s) {
  return make_result("mul_scalar", kernels::unary(a.value(), [s](double v) { return v * s; }), {a},
                     [s](const Var&, const Var& g) { return std::vector<Var>{mul_scalar(g, s)}; });
}

inline Var reshape(const Var& a, const Shape& s) {
  if (a.shape() == s) return a;
  return make_result("reshape", a.value().reshaped(s), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{reshape(g, out.input(0).shape())}; });
}

inline Var permute(const Var& a, const std::vector<std::size_t>& axes) {
  std::vector<std::size_t> inv(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = i;
  return make_result("permute", kernels::permute(a.value(), axes), {a},
                     [inv](const Var&, const Var& g) { return std::vector<Var>{permute(g, inv)}; });
}

inline Var transpose(const Var& a, int ax0, int ax1) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[detail::norm_axis(a, ax0)], axes[detail::norm_axis(a, ax1)]);
  return permute(a, axes);
}

inline Var matmul(const Var& a, const Var& b) {
  return make_result("matmul", kernels::matmul(a.value(), b.value()), {a, b}, [](const Var& out, const Var& g) {
    const Var& x = out.input(0);
    const Var& y = out.input(1);
    Var gx, gy;
    if (detail::needs(out, 0)) gx = matmul(g, transpose(y));
    if (detail::needs(out, 1)) {
      if (y.rank() == 2) {
        const std::size_t k = x.dim(-1), n = y.dim(-1);
        gy = matmul(transpose(reshape(x, {x.size() / k, k})), reshape(g, {g.size() / n, n}));
      } else {
        gy = matmul(transpose(x), g);
      }
    }
    return std::vector<Var>{gx, gy};
  });
}

inline Var slice(const Var& a, int axis, std::size_t start, std::size_t len) {
  const std::size_t ax = detail::norm_axis(a, axis);
  const std::size_t full = a.shape()[ax];
  return make_result("slice", kernels::slice(a.value(), ax, start, len), {a},
                     [ax, start, full](const Var&, const Var& g) {
                       return std::vector<Var>{embed(g, static_cast<int>(ax), start, full)};
                     });
}

inline Var embed(const Var& a, int axis, std::size_t start, std::size_t full_len) {
  const std::size_t ax = detail::norm_axis(a, axis);
  const std::size_t len = a.shape()[ax];
  return make_result("embed", kernels::embed(a.value(), ax, start, full_len), {a},
                     [ax, start, len](const Var&, const Var& g) {
                       return std::vector<Var>{slice(g, static_cast<int>(ax), start, len)};
                     });
}

inline Var concat(const std::vector<Var>& parts, int axis) {
  const std::size_t ax = detail::norm_axis(parts.front(), axis);
  std::vector<const Tensor*> ts;
  std::vector<std::size_t> lens;
  for (const Var& p : parts) {
    ts.push_back(&p.value());
    lens.push_back(p.shape()[ax]);
  }
  return make_result("concat", kernels::concat(ts, ax), parts, [ax, lens](const Var& out, const Var& g) {
    std::vector<Var> gs;
    std::size_t off = 0;
    for (std::size_t i = 0; i < lens.size(); ++i) {
      gs.push_back(detail::needs(out, i) ? slice(g, static_cast<int>(ax), off, lens[i]) : Var());
      off += lens[i];
    }
    return gs;
  });
}

inline Var gather_rows(const Var& a, const std::vector<std::size_t>& idx) {
  const std::size_t rows = a.dim(0);
  return make_result("gather", kernels::index_select(a.value(), idx), {a},
                     [idx, rows](const Var&, const Var& g) { return std::vector<Var>{scatter_add_rows(g, idx, rows)}; });
}

inline Var scatter_add_rows(const Var& a, const std::vector<std::size_t>& idx, std::size_t rows) {
  return make_result("scatter_add", kernels::index_add(a.value(), idx, rows), {a},
                     [idx](const Var&, const Var& g) { return std::vector<Var>{gather_rows(g, idx)}; });
}

inline Var sum(const Var& a, int axis, bool keepdim) {
  const std::size_t ax = detail::norm_axis(a, axis);
  return make_result("sum", kernels::sum_axis(a.value(), ax, keepdim), {a}, [ax](const Var& out, const Var& g) {
    const Shape& in = out.input(0).shape();
    return std::vector<Var>{broadcast_to(reshape(g, kernels::reduced_shape(in, ax, true)), in)};
  });
}

inline Var sum(const Var& a) {
  return make_result("sum_all", Tensor::scalar(kernels::sum_all(a.value())), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{broadcast_to(g, out.input(0).shape())}; });
}

inline Var mean(const Var& a, int axis, bool keepdim) {
  const double n = static_cast<double>(a.dim(axis));
  return mul_scalar(sum(a, axis, keepdim), 1.0 / n);
}

inline Var mean(const Var& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Var exp(const Var& a) {
  return make_result("exp", kernels::unary(a.value(), [](double v) { return std::exp(v); }), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, out)}; });
}

inline Var log(const Var& a) {
  return make_result("log", kernels::unary(a.value(), [](double v) { return std::log(v); }), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{div(g, out.input(0))}; });
}

inline Var sin(const Var& a) {
  return make_result("sin", kernels::unary(a.value(), [](double v) { return std::sin(v); }), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, cos(out.input(0)))}; });
}

inline Var cos(const Var& a) {
  return make_result("cos", kernels::unary(a.value(), [](double v) { return std::cos(v); }), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{neg(mul(g, sin(out.input(0))))}; });
}

inline Var tanh(const Var& a) {
  return make_result("tanh", kernels::unary(a.value(), [](double v) { return std::tanh(v); }), {a},
                     [](const Var& out, const Var& g) {
                       return std::vector<Var>{mul(g, add_scalar(neg(square(out)), 1.0))};
                     });
}

inline Var sqrt(const Var& a) {
  return make_result("sqrt", kernels::unary(a.value(), [](double v) { return std::sqrt(v); }), {a},
                     [](const Var& out, const Var& g) { return std::vector<Var>{div(mul_scalar(g, 0.5), out)}; });
}

inline Var pow(const Var& a, double p) {
  return make_result("pow", kernels::unary(a.value(), [p](double v) { return std::pow(v, p); }), {a},
                     [p](const Var& out, const Var& g) {
                       return std::vector<Var>{mul(g, mul_scalar(pow(out.input(0), p - 1.0), p))};
                     });
}

inline Var relu(const Var& a) {
  return make_result("relu", kernels::unary(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a},
                     [](const Var& out, const Var& g) {
                       Var mask = constant(kernels::unary(out.input(0).value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; }));
                       return std::vector<Var>{mul(g, mask)};
                     });
}

inline Var erf(const Var& a) {
  return make_result("erf", kernels::unary(a.value(), [](double v) { return std::erf(v); }), {a},
                     [](const Var& out, const Var& g) {
                       const Var& x = out.input(0);
                       return std::vector<Var>{mul(g, mul_scalar(exp(neg(square(x))), 2.0 / std::sqrt(std::numbers::pi)))};
                     });
}

// Exact erf-based GELU: x * Phi(x).
inline Var gelu(const Var& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  return make_result("gelu",
                     kernels::unary(a.value(), [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); }),
                     {a}, [](const Var& out, const Var& g) {
                       const Var& x = out.input(0);
                       Var cdf = add_scalar(mul_scalar(erf(mul_scalar(x, inv_sqrt2)), 0.5), 0.5);
                       Var pdf = mul_scalar(exp(mul_scalar(square(x), -0.5)), 1.0 / std::sqrt(2.0 * std::numbers::pi));
                       return std::vector<Var>{mul(g, add(cdf, mul(x, pdf)))};
                     });
}

inline Var softmax(const Var& a) {
  return make_result("softmax", kernels::softmax_last(a.value()), {a}, [](const Var& out, const Var& g) {
    return std::vector<Var>{mul(out, sub(g, sum(mul(g, out), -1, true)))};
  });
}

inline Var layer_norm(const Var& x, const Var* gamma, const Var* beta, double eps) {
  const std::size_t d = x.dim(-1);
  if (gamma && gamma->shape() != Shape{d}) throw ShapeError("layer_norm gamma", gamma->shape(), Shape{d});
  if (beta && beta->shape() != Shape{d}) throw ShapeError("layer_norm beta", beta->shape(), Shape{d});
  std::vector<Var> inputs{x};
  if (gamma) inputs.push_back(*gamma);
  if (beta) inputs.push_back(*beta);
  const bool has_gamma = gamma != nullptr;
  const bool has_beta = beta != nullptr;
  Tensor y = kernels::layer_norm_last(x.value(), gamma ? &gamma->value() : nullptr, beta ? &beta->value() : nullptr, eps);
  return make_result("layer_norm", std::move(y), std::move(inputs),
                     [eps, has_gamma, has_beta](const Var& out, const Var& g) {
                       const Var& xin = out.input(0);
                       Var xc = sub(xin, mean(xin, -1, true));
                       Var rstd = pow(add_scalar(mean(square(xc), -1, true), eps), -0.5);
                       Var xhat = mul(xc, rstd);
                       std::vector<Var> gs(out.node().inputs.size());
                       Var gx = has_gamma ? mul(g, out.input(1)) : g;
                       if (detail::needs(out, 0)) {
                         Var t = sub(sub(gx, mean(gx, -1, true)), mul(xhat, mean(mul(gx, xhat), -1, true)));
                         gs[0] = mul(rstd, t);
                       }
                       const Shape pshape{xin.dim(-1)};
                       if (has_gamma && detail::needs(out, 1)) gs[1] = sum_to(mul(g, xhat), pshape);
                       if (has_beta) {
                         const std::size_t bi = has_gamma ? 2 : 1;
                         if (detail::needs(out, bi)) gs[bi] = sum_to(g, pshape);
                       }
                       return gs;
                     });
}

// ---------------------------------------------------------------------------
// Backward pass.

/// Topologically ordered record of the nodes reachable from a set of outputs.
/// Every node's inputs precede it; `grad` visits the order in reverse, once per node.
class Tape {
 public:
  static Tape record(const std::vector<Var>& outputs) {
    Tape t;
    std::unordered_map<const Node*, bool> seen;
    std::vector<Var> stack;
    for (const Var& o : outputs)
      if (o.requires_grad()) stack.push_back(o);
    while (!stack.empty()) {
      Var v = stack.back();
      stack.pop_back();
      if (seen.count(v.node_ptr())) continue;
      seen[v.node_ptr()] = true;
      t.order_.push_back(v);
      for (const Var& in : v.node().inputs)
        if (in.requires_grad() && !seen.count(in.node_ptr())) stack.push_back(in);
    }
    std::sort(t.order_.begin(), t.order_.end(),
              [](const Var& a, const Var& b) { return a.node().seq < b.node().seq; });
    return t;
  }

  const std::vector<Var>& nodes() const { return order_; }

 private:
  std::vector<Var> order_;
};

/// Reverse-mode gradients of `outputs` (weighted by `seeds`, default ones) with
/// respect to `wrt`. Unreached inputs get zero gradients. With `create_graph`
/// the returned gradients carry history and can be differentiated again.
inline std::vector<Var> grad(const std::vector<Var>& outputs, const std::vector<Var>& wrt,
                             const std::vector<Var>& seeds = {}, bool create_graph = false) {
  std::optional<NoGradGuard> guard;
  std::optional<EnableGradGuard> enable;
  if (create_graph)
    enable.emplace();
  else
    guard.emplace();

  std::unordered_map<const Node*, Var> grads;
  auto accumulate = [&](const Var& target, Var g) {
    if (g.shape() != target.shape()) throw ShapeError("gradient shape mismatch", g.shape(), target.shape());
    auto it = grads.find(target.node_ptr());
    if (it == grads.end())
      grads.emplace(target.node_ptr(), std::move(g));
    else
      it->second = add(it->second, g);
  };
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!outputs[i].requires_grad()) continue;
    Var seed = i < seeds.size() ? seeds[i] : constant(Tensor::ones(outputs[i].shape()));
    accumulate(outputs[i], seed);
  }

  const Tape tape = Tape::record(outputs);
  const auto& order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Var& v = *it;
    auto gi = grads.find(v.node_ptr());
    if (gi == grads.end() || !v.node().backward) continue;
    const Var g = gi->second;
    std::vector<Var> gin = v.node().backward(v, g);
    for (std::size_t k = 0; k < gin.size(); ++k) {
      const Var& in = v.node().inputs[k];
      if (in.requires_grad()) accumulate(in, gin[k]);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto gi = grads.find(w.node_ptr());
    result.push_back(gi == grads.end() ? constant(Tensor::zeros(w.shape())) : gi->second);
  }
  return result;
}

inline Var grad(const Var& output, const Var& wrt, bool create_graph = false) {
  return grad(std::vector<Var>{output}, std::vector<Var>{wrt}, {}, create_graph).front();
}

}  // namespace fundiff::ad
