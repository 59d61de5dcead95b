#pragma once

// Dense n-d tensors with reverse-mode differentiation. Rank is dynamic,
// storage is contiguous row-major, and binary ops broadcast numpy-style
// (shapes aligned from the trailing axis, extents equal or 1).
//
// The matmul kernel skips exact-zero entries of the left operand, so
// projections of sparse 0/1 feature rows cost O(nnz) instead of O(n).

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "graphbert/common.hpp"

namespace graphbert {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace detail {

// Autograd is recorded per thread; NoGradGuard switches to inference mode.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, same extent as value
  bool requires_grad = false;
  std::vector<Tensor<T>> inputs;
  std::function<void(TensorNode<T>&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }

  static Tensor filled(Shape shape, T v) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(numel(t.node_->shape), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor& set_requires_grad(bool rg = true) {
    node_->requires_grad = rg;
    if (rg) node_->ensure_grad();
    return *this;
  }

  void zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides of `s` left-padded to rank r, with 0 on broadcast axes.
inline std::vector<std::size_t> bcast_strides(const Shape& s, const Shape& out) {
  std::size_t r = out.size();
  std::vector<std::size_t> st(r, 0);
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    std::size_t oi = i + (r - s.size());
    st[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

// Walks every index of `out`, calling f(offset_a, offset_b, offset_out).
template <class F>
void for_each_bcast(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  std::size_t r = out.size();
  std::size_t n = numel(out);
  if (n == 0) return;
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t lin = 0; lin < n; ++lin) {
    f(oa, ob, lin);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
      if (d == 0) return;
    }
  }
}

template <typename T>
bool want_grad(std::initializer_list<Tensor<T>> ins) {
  if (!grad_mode()) return false;
  for (const auto& t : ins)
    if (t.requires_grad()) return true;
  return false;
}

// Registers inputs + backprop on `out` when the tape is recording.
template <typename T>
void attach(Tensor<T>& out, std::initializer_list<Tensor<T>> ins,
            std::function<void(TensorNode<T>&)> fn) {
  if (!want_grad(ins)) return;
  out.node_->requires_grad = true;
  out.node_->ensure_grad();
  out.node_->inputs.assign(ins);
  out.node_->backprop = std::move(fn);
}

// dL/dx += reduce(outgrad) over the axes that were broadcast for x.
template <typename T>
void accumulate_bcast(const std::vector<T>& outgrad, const Shape& outshape, TensorNode<T>& x) {
  x.ensure_grad();
  auto sx = bcast_strides(x.shape, outshape);
  std::vector<std::size_t> szero(outshape.size(), 0);
  for_each_bcast(outshape, sx, szero,
                 [&](std::size_t ox, std::size_t, std::size_t lin) { x.grad[ox] += outgrad[lin]; });
}

// ---- matmul kernels; all accumulate into C -------------------------------

// C(MxN) += A(MxK) B(KxN), skipping zero entries of A.
template <typename T>
void mm_acc(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      T av = a[k];
      if (av == T(0)) continue;
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C(KxN) += A^T(MxK) B(MxN), skipping zero entries of A.
template <typename T>
void mm_at_b_acc(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    const T* b = B + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      T av = a[k];
      if (av == T(0)) continue;
      T* c = C + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C(MxK) += A(MxN) B^T(KxN) — rows of both operands are contiguous.
template <typename T>
void mm_a_bt_acc(const T* A, const T* B, T* C, std::size_t M, std::size_t N, std::size_t K) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * N;
    T* c = C + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T* b = B + k * N;
      T acc = 0;
      for (std::size_t j = 0; j < N; ++j) acc += a[j] * b[j];
      c[k] += acc;
    }
  }
}

}  // namespace detail

// ---- elementwise binary ----------------------------------------------------

template <typename T, class Fwd, class BwdA, class BwdB>
Tensor<T> ew_binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd, BwdA dfa,
                    BwdB dfb) {
  Shape os;
  try {
    os = detail::broadcast_shape(a.shape(), b.shape());
  } catch (const ShapeError&) {
    throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(os);
  auto sa = detail::bcast_strides(a.shape(), os);
  auto sb = detail::bcast_strides(b.shape(), os);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  detail::for_each_bcast(os, sa, sb, [&](std::size_t ia, std::size_t ib, std::size_t io) {
    ov[io] = fwd(av[ia], bv[ib]);
  });
  detail::attach<T>(out, {a, b}, [a, b, os, sa, sb, dfa, dfb](TensorNode<T>& n) {
    auto an = a.node_;
    auto bn = b.node_;
    if (a.requires_grad()) an->ensure_grad();
    if (b.requires_grad()) bn->ensure_grad();
    detail::for_each_bcast(os, sa, sb, [&](std::size_t ia, std::size_t ib, std::size_t io) {
      T g = n.grad[io];
      if (a.requires_grad()) an->grad[ia] += dfa(an->value[ia], bn->value[ib]) * g;
      if (b.requires_grad()) bn->grad[ib] += dfb(an->value[ia], bn->value[ib]) * g;
    });
  });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

// ---- elementwise unary -----------------------------------------------------

template <typename T, class Fwd, class Bwd>
Tensor<T> ew_unary(const Tensor<T>& a, Fwd fwd, Bwd dfa) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
  detail::attach<T>(out, {a}, [a, dfa](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += dfa(an->value[i]) * n.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return ew_unary(
      a, [](T x) { return -x; }, [](T) { return T(-1); });
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  return ew_unary(
      a, [s](T x) { return s * x; }, [s](T) { return s; });
}

template <typename T>
Tensor<T> scalar_add(const Tensor<T>& a, T s) {
  return ew_unary(
      a, [s](T x) { return x + s; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return ew_unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return ew_unary(
      a,
      [=](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [=](T x) {
        T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
        return cdf + x * pdf;
      });
}

// sqrt with the derivative clamped near zero so losses built on row norms
// stay finite at exact reconstruction.
template <typename T>
Tensor<T> sqrt_guarded(const Tensor<T>& a, T floor = T(1e-12)) {
  return ew_unary(
      a, [](T x) { return std::sqrt(std::max(x, T(0))); },
      [floor](T x) { return T(0.5) / std::sqrt(std::max(x, floor)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return ew_unary(
      a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s) {
  if (numel(s) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(s));
  Tensor<T> out = Tensor<T>::from(std::move(s), a.data());
  detail::attach<T>(out, {a}, [a](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2 tensor " + shape_str(a.shape()));
  Shape os = a.shape();
  std::size_t r = os.size();
  std::swap(os[r - 1], os[r - 2]);
  std::size_t m = a.shape()[r - 2], n = a.shape()[r - 1];
  std::size_t batches = a.size() / (m * n);
  Tensor<T> out = Tensor<T>::zeros(os);
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t b = 0; b < batches; ++b) {
    const T* src = av.data() + b * m * n;
    T* dst = ov.data() + b * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  detail::attach<T>(out, {a}, [a, m, n, batches](TensorNode<T>& nd) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t b = 0; b < batches; ++b) {
      const T* g = nd.grad.data() + b * m * n;
      T* dst = an->grad.data() + b * m * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& a, std::size_t offset, std::size_t len) {
  std::size_t d = a.shape().back();
  if (offset + len > d)
    throw ShapeError("slice_last: [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                     ") out of range for " + shape_str(a.shape()));
  Shape os = a.shape();
  os.back() = len;
  std::size_t rows = a.size() / d;
  Tensor<T> out = Tensor<T>::zeros(os);
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(av.data() + r * d + offset, len, ov.data() + r * len);
  detail::attach<T>(out, {a}, [a, d, rows, offset, len](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < len; ++j) an->grad[r * d + offset + j] += n.grad[r * len + j];
  });
  return out;
}

template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: empty input list");
  Shape base = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != base.size()) throw ShapeError("concat_last: rank mismatch");
    for (std::size_t i = 0; i + 1 < base.size(); ++i)
      if (p.shape()[i] != base[i])
        throw ShapeError("concat_last: leading shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(base));
    total += p.shape().back();
  }
  Shape os = base;
  os.back() = total;
  std::size_t rows = numel(os) / total;
  Tensor<T> out = Tensor<T>::zeros(os);
  auto& ov = out.data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t len = p.shape().back();
    const auto& pv = p.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * len, len, ov.data() + r * total + off);
    off += len;
  }
  bool rg = detail::grad_mode() &&
            std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.requires_grad(); });
  if (rg) {
    out.node_->requires_grad = true;
    out.node_->ensure_grad();
    out.node_->inputs = parts;
    out.node_->backprop = [parts, rows, total](TensorNode<T>& n) {
      std::size_t off2 = 0;
      for (const auto& p : parts) {
        std::size_t len = p.shape().back();
        if (p.requires_grad()) {
          auto pn = p.node_;
          pn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < len; ++j)
              pn->grad[r * len + j] += n.grad[r * total + off2 + j];
        }
        off2 += len;
      }
    };
  }
  return out;
}

// ---- matmul ----------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  std::size_t m = a.shape()[a.rank() - 2], ka = a.shape()[a.rank() - 1];
  std::size_t kb = b.shape()[b.rank() - 2], n = b.shape()[b.rank() - 1];
  if (ka != kb)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  Shape obatch = detail::broadcast_shape(abatch, bbatch);
  Shape os = obatch;
  os.push_back(m);
  os.push_back(n);
  Tensor<T> out = Tensor<T>::zeros(os);

  auto sa = detail::bcast_strides(abatch, obatch);
  auto sb = detail::bcast_strides(bbatch, obatch);
  for (auto& s : sa) s *= m * ka;
  for (auto& s : sb) s *= ka * n;
  std::size_t nbatch = numel(obatch);

  const T* A = a.data().data();
  const T* B = b.data().data();
  T* C = out.data().data();
  Shape ob = obatch.empty() ? Shape{1} : obatch;
  auto sa2 = sa.empty() ? std::vector<std::size_t>{0} : sa;
  auto sb2 = sb.empty() ? std::vector<std::size_t>{0} : sb;
  detail::for_each_bcast(ob, sa2, sb2, [&](std::size_t oa, std::size_t obo, std::size_t lin) {
    detail::mm_acc(A + oa, B + obo, C + lin * m * n, m, ka, n);
  });
  (void)nbatch;

  detail::attach<T>(out, {a, b}, [a, b, ob, sa2, sb2, m, ka, n](TensorNode<T>& nd) {
    auto an = a.node_;
    auto bn = b.node_;
    if (a.requires_grad()) an->ensure_grad();
    if (b.requires_grad()) bn->ensure_grad();
    const T* G = nd.grad.data();
    detail::for_each_bcast(ob, sa2, sb2, [&](std::size_t oa, std::size_t obo, std::size_t lin) {
      const T* g = G + lin * m * n;
      if (a.requires_grad())  // dA += dC * B^T
        detail::mm_a_bt_acc(g, bn->value.data() + obo, an->grad.data() + oa, m, n, ka);
      if (b.requires_grad())  // dB += A^T * dC
        detail::mm_at_b_acc(an->value.data() + oa, g, bn->grad.data() + obo, m, ka, n);
    });
  });
  return out;
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = std::accumulate(a.data().begin(), a.data().end(), T(0));
  Tensor<T> out = Tensor<T>::scalar(acc);
  detail::attach<T>(out, {a}, [a](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    T g = n.grad[0];
    for (auto& x : an->grad) x += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scalar_mul(sum_all(a), T(1) / T(a.size()));
}

template <typename T>
Tensor<T> sum_last(const Tensor<T>& a) {
  std::size_t d = a.shape().back();
  Shape os(a.shape().begin(), a.shape().end() - 1);
  if (os.empty()) os = {1};
  std::size_t rows = a.size() / d;
  Tensor<T> out = Tensor<T>::zeros(os);
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < d; ++j) acc += av[r * d + j];
    ov[r] = acc;
  }
  detail::attach<T>(out, {a}, [a, d, rows](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) an->grad[r * d + j] += n.grad[r];
  });
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("mean_axis: axis out of range");
  Shape os;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) os.push_back(a.shape()[i]);
  if (os.empty()) os = {1};
  std::size_t outer = 1, mid = a.shape()[axis], inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  Tensor<T> out = Tensor<T>::zeros(os);
  const auto& av = a.data();
  auto& ov = out.data();
  T inv = T(1) / T(mid);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t m2 = 0; m2 < mid; ++m2)
      for (std::size_t in = 0; in < inner; ++in)
        ov[o * inner + in] += av[(o * mid + m2) * inner + in] * inv;
  detail::attach<T>(out, {a}, [a, outer, mid, inner, inv](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t m2 = 0; m2 < mid; ++m2)
        for (std::size_t in = 0; in < inner; ++in)
          an->grad[(o * mid + m2) * inner + in] += n.grad[o * inner + in] * inv;
  });
  return out;
}

// ---- softmax / layer norm / dropout ---------------------------------------

template <typename T>
Tensor<T> softmax_last(const Tensor<T>& a) {
  std::size_t d = a.shape().back();
  std::size_t rows = a.size() / d;
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * d;
    T* y = ov.data() + r * d;
    T mx = *std::max_element(x, x + d);
    if (std::isnan(mx)) throw NumericError("softmax: NaN input");
    T z = 0;
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < d; ++j) y[j] /= z;
  }
  detail::attach<T>(out, {a}, [a, d, rows](TensorNode<T>& n) {
    auto an = a.node_;
    an->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * d;
      const T* g = n.grad.data() + r * d;
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < d; ++j) an->grad[r * d + j] += y[j] * (g[j] - dot);
    }
  });
  return out;
}

// Layer norm over the last axis with learnable scale/shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError("layer_norm: scale/shift extent must match last axis " + std::to_string(d));
  std::size_t rows = x.size() / d;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto stats = std::make_shared<std::vector<T>>(rows * 2);  // mean, rstd per row
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  auto& ov = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xp = xv.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xp[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      T c = xp[j] - mean;
      var += c * c;
    }
    var /= T(d);
    T rstd = T(1) / std::sqrt(var + eps);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = rstd;
    T* op = ov.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) op[j] = (xp[j] - mean) * rstd * gv[j] + bv[j];
  }
  detail::attach<T>(out, {x, gamma, beta}, [x, gamma, beta, stats, d, rows](TensorNode<T>& n) {
    auto xn = x.node_;
    auto gn = gamma.node_;
    auto bn = beta.node_;
    if (x.requires_grad()) xn->ensure_grad();
    if (gamma.requires_grad()) gn->ensure_grad();
    if (beta.requires_grad()) bn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xp = xn->value.data() + r * d;
      const T* g = n.grad.data() + r * d;
      T mean = (*stats)[2 * r], rstd = (*stats)[2 * r + 1];
      T sum_gy = 0, sum_gyx = 0;  // sums of gamma-weighted grads
      for (std::size_t j = 0; j < d; ++j) {
        T xhat = (xp[j] - mean) * rstd;
        T gg = g[j] * gn->value[j];
        sum_gy += gg;
        sum_gyx += gg * xhat;
        if (gamma.requires_grad()) gn->grad[j] += g[j] * xhat;
        if (beta.requires_grad()) bn->grad[j] += g[j];
      }
      if (x.requires_grad()) {
        for (std::size_t j = 0; j < d; ++j) {
          T xhat = (xp[j] - mean) * rstd;
          T gg = g[j] * gn->value[j];
          xn->grad[r * d + j] += rstd * (gg - sum_gy / T(d) - xhat * sum_gyx / T(d));
        }
      }
    }
  });
  return out;
}

// Inverted dropout; identity when not training or rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  auto mask = std::make_shared<std::vector<T>>(x.size());
  std::bernoulli_distribution keep(1.0 - rate);
  T scale = T(1.0 / (1.0 - rate));
  for (auto& m : *mask) m = keep(rng) ? scale : T(0);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] * (*mask)[i];
  detail::attach<T>(out, {x}, [x, mask](TensorNode<T>& n) {
    auto xn = x.node_;
    xn->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) xn->grad[i] += n.grad[i] * (*mask)[i];
  });
  return out;
}

// ---- lookup / losses -------------------------------------------------------

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::uint32_t>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be 2-d");
  std::size_t d = table.shape()[1];
  for (auto id : ids)
    if (id >= table.shape()[0]) throw ShapeError("embedding_lookup: id out of range");
  Tensor<T> out = Tensor<T>::zeros({ids.size(), d});
  const auto& tv = table.data();
  auto& ov = out.data();
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tv.data() + std::size_t(ids[r]) * d, d, ov.data() + r * d);
  detail::attach<T>(out, {table}, [table, ids, d](TensorNode<T>& n) {
    auto tn = table.node_;
    tn->ensure_grad();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < d; ++j)
        tn->grad[std::size_t(ids[r]) * d + j] += n.grad[r * d + j];
  });
  return out;
}

// Softmax cross-entropy summed over rows, integer targets.
template <typename T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, const std::vector<std::uint32_t>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be 2-d");
  std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n) throw ShapeError("cross_entropy: label count mismatch");
  for (auto y : labels)
    if (y >= c) throw ShapeError("cross_entropy: label out of range");
  const auto& lv = logits.data();
  T loss = 0;
  auto probs = std::make_shared<std::vector<T>>(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = lv.data() + r * c;
    T mx = *std::max_element(x, x + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    T lse = mx + std::log(z);
    loss += lse - x[labels[r]];
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(x[j] - lse);
  }
  Tensor<T> out = Tensor<T>::scalar(loss);
  detail::attach<T>(out, {logits}, [logits, labels, probs, n, c](TensorNode<T>& nd) {
    auto ln = logits.node_;
    ln->ensure_grad();
    T g = nd.grad[0];
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j)
        ln->grad[r * c + j] +=
            g * ((*probs)[r * c + j] - (j == labels[r] ? T(1) : T(0)));
  });
  return out;
}

// ---- composite helpers -----------------------------------------------------

template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a) {
  return sqrt_guarded(sum_all(square(a)));
}

template <typename T>
Tensor<T> squared_frobenius_distance(const Tensor<T>& a, const Tensor<T>& b) {
  return sum_all(square(sub(a, b)));
}

// Pairwise cosine similarity of the rows of Z; errors on zero-norm rows.
template <typename T>
Tensor<T> cosine_similarity_matrix(const Tensor<T>& z) {
  if (z.rank() != 2) throw ShapeError("cosine_similarity_matrix: expected 2-d input");
  std::size_t n = z.shape()[0], d = z.shape()[1];
  const auto& zv = z.data();
  for (std::size_t r = 0; r < n; ++r) {
    T s = 0;
    for (std::size_t j = 0; j < d; ++j) s += zv[r * d + j] * zv[r * d + j];
    if (s == T(0))
      throw NumericError("cosine_similarity_matrix: zero-norm embedding row for node " +
                         std::to_string(r));
  }
  Tensor<T> norms = reshape(sqrt_guarded(sum_last(square(z))), {n, 1});
  Tensor<T> zn = div(z, norms);
  return matmul(zn, transpose_last2(zn));
}

// ---- backward --------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& root) {
  if (root.size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;
  // iterative post-order DFS
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(root.node_.get(), 0);
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode<T>* child = node->inputs[next].node_.get();
      ++next;
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node_->ensure_grad();
  root.node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

// Central finite differences against reverse-mode gradients; returns the
// max relative error over all coordinates of x. Meant for T = double.
template <typename T, class F>
T grad_check(F f, Tensor<T>& x, T eps = T(1e-5)) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<T> y = f(x);
  if (std::isnan(y.item())) throw NumericError("grad_check: NaN in forward pass");
  backward(y);
  std::vector<T> analytic = x.grad();
  T max_rel = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    T orig = x.data()[i];
    NoGradGuard ng;
    x.data()[i] = orig + eps;
    T fp = f(x).item();
    x.data()[i] = orig - eps;
    T fm = f(x).item();
    x.data()[i] = orig;
    T numeric = (fp - fm) / (2 * eps);
    T denom = std::max(T(1), std::max(std::abs(numeric), std::abs(analytic[i])));
    max_rel = std::max(max_rel, std::abs(numeric - analytic[i]) / denom);
  }
  return max_rel;
}

}  // namespace graphbert
