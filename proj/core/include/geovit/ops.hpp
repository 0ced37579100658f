#pragma once

// Differentiable tensor operations. Every function here registers a backward
// rule on the active tape when any input requires a gradient.
//
// Broadcasting is limited to two cases: an operand whose shape is a trailing
// suffix of the other's (e.g. a bias [d] against activations [n x d]), and a
// single-element operand of shape [1].

#include <cstddef>
#include <span>
#include <vector>

#include "geovit/tensor.hpp"

namespace geovit {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise (Hadamard) product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
/// Sum along one axis; the axis is removed (rank-1 inputs give shape [1]).
template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis);

/// Same data, new shape; row-major order is preserved.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// General axis permutation: output axis i is input axis `axes[i]`.
template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::span<const std::size_t> axes);
/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Repeats `a` over leading axes so that it takes `shape`; `a.shape()` must
/// be a suffix of `shape`.
template <typename T>
Tensor<T> broadcast(const Tensor<T>& a, const Shape& shape);
/// out.flat[i] = a.flat[indices[i]]; backward scatters additively.
template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::span<const std::size_t> indices, Shape shape);

/// [.., m, k] x [k, n] or batched [B.., m, k] x [B.., k, n] with equal
/// leading dimensions.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Max-subtracted softmax along `axis`. NaN inputs propagate to NaN outputs.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma and beta (both [d]).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// Tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Bilinear resize of the last two axes by an integer factor, half-pixel
/// centers (align_corners = false), border-clamped.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t factor);

/// Non-differentiable kernel behind upsample_bilinear, for plain buffers of
/// `planes` stacked h x w images.
template <typename T>
std::vector<T> upsample_bilinear_values(std::span<const T> in, std::size_t planes, std::size_t h,
                                        std::size_t w, std::size_t factor);

}  // namespace geovit
