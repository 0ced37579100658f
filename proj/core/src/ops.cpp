#include "geovit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "geovit/errors.hpp"

namespace geovit {
namespace {

template <typename T>
using Impl = std::shared_ptr<TensorImpl<T>>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
Tensor<T> make_tensor(Shape shape, std::vector<T> data) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor<T>(std::move(impl));
}

/// Records `out` on the active tape when any of `inputs` requires a gradient.
/// `make_backward` is only invoked when recording happens.
template <typename T, typename MakeBackward>
void record(std::string_view op, std::initializer_list<const Tensor<T>*> inputs, const Tensor<T>& out,
            MakeBackward&& make_backward) {
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return;
  std::vector<Impl<T>> tracked;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) tracked.push_back(t->impl());
  }
  if (tracked.empty()) return;
  tape->record(op, std::move(tracked), out.impl(), make_backward());
}

template <typename T>
void require_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) throw ContractViolation(std::string(op) + ": undefined tensor operand");
}

void check_axis(std::size_t axis, const Shape& s, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                         shape_to_string(s));
  }
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

bool is_unit(const Shape& s) { return shape_numel(s) == 1; }

/// Output shape of a binary elementwise op under the suffix/scalar rule.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (is_unit(b) || is_suffix(b, a)) return a;
  if (is_unit(a) || is_suffix(a, b)) return b;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                       shape_to_string(b));
}

enum class BinaryKind { kAdd, kSub, kMul };

/// Calls f(i, i mod na, i mod nb) for i in [0, n) in increasing order; one of
/// na, nb equals n and the other divides it.
template <typename F>
void for_each_broadcast(std::size_t n, std::size_t na, std::size_t nb, F&& f) {
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
  } else if (na == n) {
    for (std::size_t base = 0; base < n; base += nb)
      for (std::size_t k = 0; k < nb; ++k) f(base + k, base + k, k);
  } else {
    for (std::size_t base = 0; base < n; base += na)
      for (std::size_t j = 0; j < na; ++j) f(base + j, j, base + j);
  }
}

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
  require_defined(a, name);
  require_defined(b, name);
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const std::size_t n = shape_numel(out_shape);
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t na = ad.size(), nb = bd.size();
  std::vector<T> out(n);
  switch (kind) {
    case BinaryKind::kAdd:
      for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t j, std::size_t k) { out[i] = ad[j] + bd[k]; });
      break;
    case BinaryKind::kSub:
      for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t j, std::size_t k) { out[i] = ad[j] - bd[k]; });
      break;
    case BinaryKind::kMul:
      for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t j, std::size_t k) { out[i] = ad[j] * bd[k]; });
      break;
  }
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));
  record(name, {&a, &b}, result, [&] {
    Impl<T> ia = a.impl(), ib = b.impl();
    return [ia, ib, kind, n](std::span<const T> g) {
      const std::size_t na = ia->data.size(), nb = ib->data.size();
      const auto& da = ia->data;
      const auto& db = ib->data;
      if (ia->requires_grad) {
        auto ga = ia->grad_buffer();
        if (kind == BinaryKind::kMul) {
          for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t j, std::size_t k) { ga[j] += g[i] * db[k]; });
        } else {
          for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t j, std::size_t) { ga[j] += g[i]; });
        }
      }
      if (ib->requires_grad) {
        auto gb = ib->grad_buffer();
        switch (kind) {
          case BinaryKind::kAdd:
            for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t, std::size_t k) { gb[k] += g[i]; });
            break;
          case BinaryKind::kSub:
            for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t, std::size_t k) { gb[k] -= g[i]; });
            break;
          case BinaryKind::kMul:
            for_each_broadcast(n, na, nb, [&](std::size_t i, std::size_t j, std::size_t k) { gb[k] += g[i] * da[j]; });
            break;
        }
      }
    };
  });
  return result;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kMul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  require_defined(a, "scale");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  Tensor<T> result = make_tensor(a.shape(), std::move(out));
  record("scale", {&a}, result, [&] {
    Impl<T> ia = a.impl();
    return [ia, factor](std::span<const T> g) {
      auto ga = ia->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    };
  });
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  require_defined(a, "sum");
  T total = T(0);
  for (T v : a.data()) total += v;
  Tensor<T> result = make_tensor(Shape{1}, std::vector<T>{total});
  record("sum", {&a}, result, [&] {
    Impl<T> ia = a.impl();
    return [ia](std::span<const T> g) {
      for (T& v : ia->grad_buffer()) v += g[0];
    };
  });
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis) {
  require_defined(a, "sum");
  check_axis(axis, a.shape(), "sum");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto ad = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += ad[(o * s.len + l) * s.inner + i];
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));
  record("sum_axis", {&a}, result, [&] {
    Impl<T> ia = a.impl();
    return [ia, s](std::span<const T> g) {
      auto ga = ia->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t l = 0; l < s.len; ++l)
          for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
    };
  });
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  require_defined(a, "mean");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis) {
  require_defined(a, "mean");
  check_axis(axis, a.shape(), "mean");
  return scale(sum(a, axis), T(1) / static_cast<T>(a.shape()[axis]));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  Tensor<T> result(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  record("reshape", {&a}, result, [&] {
    Impl<T> ia = a.impl();
    return [ia](std::span<const T> g) {
      auto ga = ia->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  });
  return result;
}

namespace {

/// Row-major strides of `s`.
std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

template <typename T>
Tensor<T> gather_impl(const Tensor<T>& a, std::vector<std::size_t> indices, Shape shape, std::string_view op) {
  const auto ad = a.data();
  std::vector<T> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = ad[indices[i]];
  Tensor<T> result = make_tensor(std::move(shape), std::move(out));
  record(op, {&a}, result, [&] {
    Impl<T> ia = a.impl();
    return [ia, idx = std::move(indices)](std::span<const T> g) {
      auto ga = ia->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[i];
    };
  });
  return result;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::span<const std::size_t> axes) {
  require_defined(a, "permute");
  const Shape& in = a.shape();
  if (axes.size() != in.size()) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for " + shape_to_string(in));
  }
  std::vector<bool> seen(in.size(), false);
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= in.size() || seen[axes[i]]) throw DimensionError("permute: axes are not a permutation");
    seen[axes[i]] = true;
    out_shape[i] = in[axes[i]];
  }
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> src_stride(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) src_stride[i] = in_strides[axes[i]];

  const std::size_t n = a.numel();
  std::vector<std::size_t> indices(n);
  std::vector<std::size_t> counter(in.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    indices[i] = src;
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      ++counter[d];
      src += src_stride[d];
      if (counter[d] < out_shape[d]) break;
      src -= src_stride[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  return gather_impl(a, std::move(indices), std::move(out_shape), "permute");
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_defined(a, "transpose");
  const std::size_t r = a.rank();
  if (r < 2) throw DimensionError("transpose: needs rank >= 2, got " + shape_to_string(a.shape()));
  std::vector<std::size_t> axes(r);
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(a, std::span<const std::size_t>(axes));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::span<const std::size_t> indices, Shape shape) {
  require_defined(a, "gather");
  if (shape_numel(shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) + " indices for shape " + shape_to_string(shape));
  }
  for (std::size_t idx : indices) {
    if (idx >= a.numel()) throw DimensionError("gather: index " + std::to_string(idx) + " out of range");
  }
  return gather_impl(a, std::vector<std::size_t>(indices.begin(), indices.end()), std::move(shape), "gather");
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  check_axis(axis, first, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: " + shape_to_string(s) + " incompatible with " + shape_to_string(first) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_at(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis];
    const auto pd = p.data();
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * len * whole.inner), len * whole.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * whole.len + offset) * whole.inner));
    }
    offset += len;
  }
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));

  Tape<T>* tape = Tape<T>::active();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    std::vector<Impl<T>> all, tracked;
    for (const auto& p : parts) {
      all.push_back(p.impl());
      if (p.requires_grad()) tracked.push_back(p.impl());
    }
    tape->record("concat", std::move(tracked), result.impl(),
                 [all, offsets, axis, whole](std::span<const T> g) {
                   for (std::size_t k = 0; k < all.size(); ++k) {
                     if (!all[k]->requires_grad) continue;
                     const std::size_t len = all[k]->shape[axis];
                     auto gp = all[k]->grad_buffer();
                     for (std::size_t o = 0; o < whole.outer; ++o) {
                       const std::size_t src = (o * whole.len + offsets[k]) * whole.inner;
                       const std::size_t dst = o * len * whole.inner;
                       for (std::size_t i = 0; i < len * whole.inner; ++i) gp[dst + i] += g[src + i];
                     }
                   }
                 });
  }
  return result;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  check_axis(axis, a.shape(), "slice");
  if (begin >= end || end > a.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_to_string(a.shape()));
  }
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  std::vector<std::size_t> indices;
  indices.reserve(shape_numel(out_shape));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = begin; l < end; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) indices.push_back((o * s.len + l) * s.inner + i);
  return gather_impl(a, std::move(indices), std::move(out_shape), "slice");
}

template <typename T>
Tensor<T> broadcast(const Tensor<T>& a, const Shape& shape) {
  require_defined(a, "broadcast");
  if (!is_suffix(a.shape(), shape) && !is_unit(a.shape())) {
    throw DimensionError("broadcast: " + shape_to_string(a.shape()) + " is not a suffix of " +
                         shape_to_string(shape));
  }
  const std::size_t n = shape_numel(shape), na = a.numel();
  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i % na;
  return gather_impl(a, std::move(indices), shape, "broadcast");
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: shape mismatch " + shape_to_string(sa) + " x " + shape_to_string(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) throw mismatch();

  // Either b is a shared 2D matrix (a's leading dims fold into rows) or both
  // carry identical leading batch dims.
  const bool shared_b = sb.size() == 2;
  std::size_t batch = 1;
  if (!shared_b) {
    if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) throw mismatch();
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  }
  const std::size_t rows = shared_b ? a.numel() / k : m;
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<T> out(shape_numel(out_shape));
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap<T>(out.data() + i * rows * n, rows, n).noalias() =
        ConstMap<T>(ap + i * rows * k, rows, k) * ConstMap<T>(bp + i * k * n, k, n);
  }
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));
  record("matmul", {&a, &b}, result, [&] {
    Impl<T> ia = a.impl(), ib = b.impl();
    return [ia, ib, batch, rows, k, n, shared_b](std::span<const T> g) {
      if (ia->requires_grad) {
        auto ga = ia->grad_buffer();
        for (std::size_t i = 0; i < batch; ++i) {
          MutMap<T>(ga.data() + i * rows * k, rows, k).noalias() +=
              ConstMap<T>(g.data() + i * rows * n, rows, n) *
              ConstMap<T>(ib->data.data() + (shared_b ? 0 : i * k * n), k, n).transpose();
        }
      }
      if (ib->requires_grad) {
        auto gb = ib->grad_buffer();
        for (std::size_t i = 0; i < batch; ++i) {
          MutMap<T>(gb.data() + (shared_b ? 0 : i * k * n), k, n).noalias() +=
              ConstMap<T>(ia->data.data() + i * rows * k, rows, k).transpose() *
              ConstMap<T>(g.data() + i * rows * n, rows, n);
        }
      }
    };
  });
  return result;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "softmax");
  check_axis(axis, x.shape(), "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, xd[base + l * s.inner]);
      // std::max drops NaN; make it propagate instead.
      for (std::size_t l = 0; l < s.len; ++l)
        if (std::isnan(xd[base + l * s.inner])) mx = xd[base + l * s.inner];
      T total = T(0);
      for (std::size_t l = 0; l < s.len; ++l) {
        const T e = std::exp(xd[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  record("softmax", {&x}, result, [&] {
    Impl<T> ix = x.impl();
    std::weak_ptr<TensorImpl<T>> wy = result.impl();
    return [ix, wy, s](std::span<const T> g) {
      const auto y = wy.lock();
      auto gx = ix->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          T dot = T(0);
          for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y->data[base + l * s.inner];
          for (std::size_t l = 0; l < s.len; ++l) {
            const std::size_t j = base + l * s.inner;
            gx[j] += y->data[j] * (g[j] - dot);
          }
        }
      }
    };
  });
  return result;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "log_softmax");
  check_axis(axis, x.shape(), "log_softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, xd[base + l * s.inner]);
      T total = T(0);
      for (std::size_t l = 0; l < s.len; ++l) total += std::exp(xd[base + l * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = xd[base + l * s.inner] - lse;
    }
  }
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  record("log_softmax", {&x}, result, [&] {
    Impl<T> ix = x.impl();
    std::weak_ptr<TensorImpl<T>> wy = result.impl();
    return [ix, wy, s](std::span<const T> g) {
      const auto y = wy.lock();
      auto gx = ix->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          T gsum = T(0);
          for (std::size_t l = 0; l < s.len; ++l) gsum += g[base + l * s.inner];
          for (std::size_t l = 0; l < s.len; ++l) {
            const std::size_t j = base + l * s.inner;
            gx[j] += g[j] - std::exp(y->data[j]) * gsum;
          }
        }
      }
    };
  });
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_defined(x, "layer_norm");
  if (!(eps > T(0))) throw ContractViolation("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + shape_to_string(gamma.shape()) + " / beta " +
                         shape_to_string(beta.shape()) + " do not match last axis of " + shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<T> xhat(xd.size()), rstd(rows), out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
    }
  }
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  record("layer_norm", {&x, &gamma, &beta}, result, [&] {
    Impl<T> ix = x.impl(), ig = gamma.impl(), ib = beta.impl();
    return [ix, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](std::span<const T> g) {
      if (ig->requires_grad) {
        auto gg = ig->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
      }
      if (ib->requires_grad) {
        auto gb = ib->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
      if (ix->requires_grad) {
        auto gx = ix->grad_buffer();
        const auto& gam = ig->data;
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * gam[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[r * d + j];
          }
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * gam[j];
            gx[r * d + j] += rstd[r] * (dxhat - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
          }
        }
      }
    };
  });
  return result;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  require_defined(x, "gelu");
  constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kCubic = T(0.044715);
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const T v = xd[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kAlpha * (v + kCubic * v * v * v)));
  }
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  record("gelu", {&x}, result, [&] {
    Impl<T> ix = x.impl();
    return [ix](std::span<const T> g) {
      auto gx = ix->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = ix->data[i];
        const T t = std::tanh(kAlpha * (v + kCubic * v * v * v));
        const T dt = kAlpha * (T(1) + T(3) * kCubic * v * v);
        gx[i] += g[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * dt);
      }
    };
  });
  return result;
}

namespace {

struct InterpAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

InterpAxis interp_axis(std::size_t in, std::size_t factor) {
  InterpAxis ax;
  const std::size_t out = in * factor;
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    ax.lo.push_back(i0);
    ax.hi.push_back(i1);
    ax.frac.push_back(src - static_cast<double>(i0));
  }
  return ax;
}

}  // namespace

template <typename T>
std::vector<T> upsample_bilinear_values(std::span<const T> in, std::size_t planes, std::size_t h, std::size_t w,
                                        std::size_t factor) {
  const InterpAxis ay = interp_axis(h, factor), ax = interp_axis(w, factor);
  const std::size_t oh = h * factor, ow = w * factor;
  std::vector<T> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const T fy = static_cast<T>(ay.frac[y]);
      const T* r0 = src + ay.lo[y] * w;
      const T* r1 = src + ay.hi[y] * w;
      for (std::size_t x = 0; x < ow; ++x) {
        const T fx = static_cast<T>(ax.frac[x]);
        const T top = r0[ax.lo[x]] * (T(1) - fx) + r0[ax.hi[x]] * fx;
        const T bot = r1[ax.lo[x]] * (T(1) - fx) + r1[ax.hi[x]] * fx;
        dst[y * ow + x] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t factor) {
  require_defined(x, "upsample_bilinear");
  if (x.rank() < 2) throw DimensionError("upsample_bilinear: needs rank >= 2, got " + shape_to_string(x.shape()));
  if (factor == 0) throw ContractViolation("upsample_bilinear: factor must be positive");
  const std::size_t h = x.shape()[x.rank() - 2], w = x.shape().back();
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] *= factor;
  out_shape.back() *= factor;
  Tensor<T> result = make_tensor(std::move(out_shape), upsample_bilinear_values<T>(x.data(), planes, h, w, factor));
  record("upsample_bilinear", {&x}, result, [&] {
    Impl<T> ix = x.impl();
    return [ix, planes, h, w, factor](std::span<const T> g) {
      const InterpAxis ay = interp_axis(h, factor), ax = interp_axis(w, factor);
      const std::size_t oh = h * factor, ow = w * factor;
      auto gx = ix->grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        T* dst = gx.data() + p * h * w;
        const T* src = g.data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const T fy = static_cast<T>(ay.frac[y]);
          T* r0 = dst + ay.lo[y] * w;
          T* r1 = dst + ay.hi[y] * w;
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const T fx = static_cast<T>(ax.frac[xo]);
            const T v = src[y * ow + xo];
            r0[ax.lo[xo]] += v * (T(1) - fy) * (T(1) - fx);
            r0[ax.hi[xo]] += v * (T(1) - fy) * fx;
            r1[ax.lo[xo]] += v * fy * (T(1) - fx);
            r1[ax.hi[xo]] += v * fy * fx;
          }
        }
      }
    };
  });
  return result;
}

#define GEOVIT_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                         \
  template Tensor<T> sum(const Tensor<T>&, std::size_t);                                            \
  template Tensor<T> mean(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
  template Tensor<T> permute(const Tensor<T>&, std::span<const std::size_t>);                       \
  template Tensor<T> transpose(const Tensor<T>&);                                                   \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                               \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                \
  template Tensor<T> broadcast(const Tensor<T>&, const Shape&);                                     \
  template Tensor<T> gather(const Tensor<T>&, std::span<const std::size_t>, Shape);                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> log_softmax(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);           \
  template Tensor<T> gelu(const Tensor<T>&);                                                        \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, std::size_t);                              \
  template std::vector<T> upsample_bilinear_values(std::span<const T>, std::size_t, std::size_t, \
                                                   std::size_t, std::size_t);

GEOVIT_INSTANTIATE_OPS(float)
GEOVIT_INSTANTIATE_OPS(double)

#undef GEOVIT_INSTANTIATE_OPS

}  // namespace geovit
