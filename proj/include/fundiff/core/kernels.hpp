#pragma once

// Raw tensor kernels. No autodiff bookkeeping lives here; the Var layer in
// autodiff.hpp composes these into differentiable primitives.

#include <Eigen/Dense>

#include <fundiff/core/tensor.hpp>

namespace fundiff::kernels {

inline Shape row_major_strides(const Shape& s) {
  Shape st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) throw ShapeError("incompatible broadcast", a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` viewed inside the broadcast shape `out` (0 on broadcast axes).
inline Shape broadcast_strides(const Shape& s, const Shape& out) {
  Shape st(out.size(), 0);
  const Shape own = row_major_strides(s);
  const std::size_t off = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) st[off + i] = s[i] == 1 ? 0 : own[i];
  return st;
}

// Visits every index of `out` in row-major order, passing the flat offsets into
// the two broadcast operands.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const std::size_t r = out.size();
  const std::size_t n = shape_numel(out);
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    f(k, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    double* po = out.ptr();
    for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor out(os);
  double* po = out.ptr();
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  if (b.size() == 1 && a.shape() == os) {
    const double bv = pb[0];
    for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i], bv);
    return out;
  }
  if (a.size() == 1 && b.shape() == os) {
    const double av = pa[0];
    for (std::size_t i = 0, n = b.size(); i < n; ++i) po[i] = f(av, pb[i]);
    return out;
  }
  if (a.shape() == os && is_suffix(b.shape(), os)) {
    const std::size_t inner = b.size();
    for (std::size_t o = 0, n = a.size(); o < n; o += inner)
      for (std::size_t i = 0; i < inner; ++i) po[o + i] = f(pa[o + i], pb[i]);
    return out;
  }
  if (b.shape() == os && is_suffix(a.shape(), os)) {
    const std::size_t inner = a.size();
    for (std::size_t o = 0, n = b.size(); o < n; o += inner)
      for (std::size_t i = 0; i < inner; ++i) po[o + i] = f(pa[i], pb[o + i]);
    return out;
  }
  const Shape sa = broadcast_strides(a.shape(), os);
  const Shape sb = broadcast_strides(b.shape(), os);
  for_each_broadcast(os, sa, sb, [&](std::size_t k, std::size_t ia, std::size_t ib) { po[k] = f(pa[ia], pb[ib]); });
  return out;
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i]);
  return out;
}

inline Tensor broadcast_to(const Tensor& a, const Shape& target) {
  if (a.shape() == target) return a;
  const Shape os = broadcast_shape(a.shape(), target);
  if (os != target) throw ShapeError("cannot broadcast", a.shape(), target);
  Tensor out(target);
  const Shape sa = broadcast_strides(a.shape(), target);
  const double* pa = a.ptr();
  double* po = out.ptr();
  for_each_broadcast(target, sa, sa, [&](std::size_t k, std::size_t ia, std::size_t) { po[k] = pa[ia]; });
  return out;
}

// Sums a broadcast result back down to `target` (the adjoint of broadcast_to).
inline Tensor sum_to(const Tensor& a, const Shape& target) {
  if (a.shape() == target) return a;
  if (broadcast_shape(target, a.shape()) != a.shape()) throw ShapeError("cannot reduce", a.shape(), target);
  Tensor out(target);
  double* po = out.ptr();
  const double* pa = a.ptr();
  if (is_suffix(target, a.shape())) {
    const std::size_t inner = out.size();
    for (std::size_t o = 0, n = a.size(); o < n; o += inner)
      for (std::size_t i = 0; i < inner; ++i) po[i] += pa[o + i];
    return out;
  }
  const Shape st = broadcast_strides(target, a.shape());
  for_each_broadcast(a.shape(), st, st, [&](std::size_t k, std::size_t it, std::size_t) { po[it] += pa[k]; });
  return out;
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape o = s;
  if (keepdim)
    o[axis] = 1;
  else
    o.erase(o.begin() + static_cast<std::ptrdiff_t>(axis));
  return o;
}

inline Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  Tensor out(reduced_shape(a.shape(), axis, keepdim));
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l) {
      const double* row = pa + (o * sp.len + l) * sp.inner;
      double* dst = po + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += row[i];
    }
  return out;
}

inline double sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

// Matrix product over the last two axes. `b` is either rank 2 (shared across
// all leading batch axes of `a`) or carries the same batch axes as `a`.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2", a.shape(), b.shape());
  const std::size_t m = a.dim(-2), k = a.dim(-1);
  const std::size_t kb = b.dim(-2), n = b.dim(-1);
  if (k != kb) throw ShapeError("matmul inner dimension mismatch", a.shape(), b.shape());
  Shape os(a.shape().begin(), a.shape().end() - 1);
  os.push_back(n);
  Tensor out(os);
  if (b.rank() == 2) {
    const std::size_t rows = a.size() / k;
    Eigen::Map<const RowMat> A(a.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
    Eigen::Map<const RowMat> B(b.ptr(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    Eigen::Map<RowMat> C(out.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    C.noalias() = A * B;
    return out;
  }
  if (!std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin(), b.shape().end() - 2) ||
      a.rank() != b.rank())
    throw ShapeError("matmul batch dimensions differ", a.shape(), b.shape());
  const std::size_t batch = a.size() / (m * k);
  for (std::size_t i = 0; i < batch; ++i) {
    Eigen::Map<const RowMat> A(a.ptr() + i * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    Eigen::Map<const RowMat> B(b.ptr() + i * k * n, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    Eigen::Map<RowMat> C(out.ptr() + i * m * n, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    C.noalias() = A * B;
  }
  return out;
}

inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  if (axes.size() != a.rank()) throw ShapeError("permute axes do not match rank of " + shape_str(a.shape()));
  Shape os(a.rank());
  const Shape ist = row_major_strides(a.shape());
  Shape src_strides(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    os[i] = a.shape()[axes[i]];
    src_strides[i] = ist[axes[i]];
  }
  Tensor out(os);
  const double* pa = a.ptr();
  double* po = out.ptr();
  for_each_broadcast(os, src_strides, src_strides, [&](std::size_t k, std::size_t is, std::size_t) { po[k] = pa[is]; });
  return out;
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  if (start + len > sp.len)
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) + ") out of range for " +
                     shape_str(a.shape()));
  Shape os = a.shape();
  os[axis] = len;
  Tensor out(os);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(a.ptr() + (o * sp.len + start) * sp.inner, len * sp.inner, out.ptr() + o * len * sp.inner);
  return out;
}

// Places `a` into a zero tensor whose extent along `axis` is `full_len`.
inline Tensor embed(const Tensor& a, std::size_t axis, std::size_t start, std::size_t full_len) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape os = a.shape();
  os[axis] = full_len;
  Tensor out(os);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(a.ptr() + o * sp.len * sp.inner, sp.len * sp.inner, out.ptr() + (o * full_len + start) * sp.inner);
  return out;
}

inline Tensor index_select(const Tensor& a, const std::vector<std::size_t>& idx) {
  const std::size_t row = a.size() / a.dim(0);
  Shape os = a.shape();
  os[0] = idx.size();
  Tensor out(os);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.dim(0)) throw ShapeError("gather index out of range for " + shape_str(a.shape()));
    std::copy_n(a.ptr() + idx[i] * row, row, out.ptr() + i * row);
  }
  return out;
}

inline Tensor index_add(const Tensor& src, const std::vector<std::size_t>& idx, std::size_t rows) {
  const std::size_t row = src.size() / std::max<std::size_t>(src.dim(0), 1);
  Shape os = src.shape();
  os[0] = rows;
  Tensor out(os);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < row; ++j) out[idx[i] * row + j] += src[i * row + j];
  return out;
}

inline Tensor softmax_last(const Tensor& a) {
  const std::size_t d = a.dim(-1);
  Tensor out(a.shape());
  for (std::size_t r = 0, n = a.size() / d; r < n; ++r) {
    const double* x = a.ptr() + r * d;
    double* y = out.ptr() + r * d;
    const double mx = *std::max_element(x, x + d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (y[i] = std::exp(x[i] - mx));
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < d; ++i) y[i] *= inv;
  }
  return out;
}

inline Tensor layer_norm_last(const Tensor& a, const Tensor* gamma, const Tensor* beta, double eps) {
  const std::size_t d = a.dim(-1);
  Tensor out(a.shape());
  for (std::size_t r = 0, n = a.size() / d; r < n; ++r) {
    const double* x = a.ptr() + r * d;
    double* y = out.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += x[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      double v = (x[i] - mu) * rstd;
      if (gamma) v *= (*gamma)[i];
      if (beta) v += (*beta)[i];
      y[i] = v;
    }
  }
  return out;
}

inline Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis) {
  Shape os = parts.front()->shape();
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    Shape a = p->shape(), b = os;
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat shapes differ off-axis", p->shape(), os);
    total += p->shape()[axis];
  }
  os[axis] = total;
  Tensor out(os);
  std::size_t off = 0;
  for (const Tensor* p : parts) {
    const AxisSplit sp = split_axis(p->shape(), axis);
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(p->ptr() + o * sp.len * sp.inner, sp.len * sp.inner, out.ptr() + (o * total + off) * sp.inner);
    off += sp.len;
  }
  return out;
}

}  // namespace fundiff::kernels
