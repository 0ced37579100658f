#pragma once

// Parameterized building blocks. Each layer registers its parameters in a
// ParamStore under a dotted name prefix and keeps handles to them; layers
// accept any number of leading batch dimensions.

#include <cstddef>
#include <cstdint>
#include <string>

#include "geovit/ops.hpp"
#include "geovit/param_store.hpp"

namespace geovit::nn {

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out);

  /// x [.., in] -> [.., out]
  Tensor<T> operator()(const Tensor<T>& x) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_;  // [in x out]
  Tensor<T> bias_;    // [out]
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& prefix, std::size_t dim, T eps = T(1e-5));

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma_, beta_, eps_); }

 private:
  Tensor<T> gamma_;
  Tensor<T> beta_;
  T eps_ = T(1e-5);
};

/// Scaled dot-product attention over `num_heads` heads, without projections.
/// Q [.., n_q, d], K and V [.., n_k, d]; returns the concatenated head
/// outputs [.., n_q, d]. When `weights` is non-null it receives the
/// attention distribution [lead, heads, n_q, n_k].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t num_heads,
                               Tensor<T>* weights = nullptr);

/// Pre-softmax logits QK^T / sqrt(d_k), shape [lead, heads, n_q, n_k].
template <typename T>
Tensor<T> attention_logits(const Tensor<T>& q, const Tensor<T>& k, std::size_t num_heads);

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& store, const std::string& prefix, std::size_t dim, std::size_t num_heads);

  /// Already-projected Q, K, V through the heads and the output projection.
  Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const;
  Tensor<T> self_attention(const Tensor<T>& tokens) const;
  /// Queries from `queries_from`, keys and values from `keys_values_from`.
  Tensor<T> cross_attention(const Tensor<T>& queries_from, const Tensor<T>& keys_values_from) const;

  std::size_t num_heads() const { return num_heads_; }
  Linear<T>& q_proj() { return q_; }
  Linear<T>& k_proj() { return k_; }
  Linear<T>& v_proj() { return v_; }
  Linear<T>& out_proj() { return o_; }

 private:
  Linear<T> q_, k_, v_, o_;
  std::size_t num_heads_ = 1;
};

/// Linear(d -> ratio*d), GELU, Linear(ratio*d -> d).
template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore<T>& store, const std::string& prefix, std::size_t dim, std::size_t ratio);

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2_(gelu(fc1_(x))); }

  Linear<T>& fc1() { return fc1_; }
  Linear<T>& fc2() { return fc2_; }

 private:
  Linear<T> fc1_, fc2_;
};

/// Splits [.., C, H, W] images into non-overlapping P x P patches in
/// row-major patch order. Each patch is flattened band-major (band, row,
/// column), giving [.., (H/P)(W/P), P*P*C].
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, std::size_t patch);

template <typename T>
class PatchEmbedder {
 public:
  PatchEmbedder() = default;
  PatchEmbedder(ParamStore<T>& store, const std::string& prefix, std::size_t bands, std::size_t patch,
                std::size_t dim);

  /// [.., bands, H, W] -> [.., (H/P)(W/P), dim]; H and W must be multiples of P.
  Tensor<T> operator()(const Tensor<T>& images) const;

  std::size_t patch_size() const { return patch_; }
  Linear<T>& projection() { return proj_; }

 private:
  Linear<T> proj_;
  std::size_t bands_ = 0;
  std::size_t patch_ = 1;
};

/// Learned table added to the first n token positions.
template <typename T>
class PositionalEmbedding {
 public:
  PositionalEmbedding() = default;
  PositionalEmbedding(ParamStore<T>& store, const std::string& prefix, std::size_t max_tokens, std::size_t dim);

  Tensor<T> operator()(const Tensor<T>& tokens) const;

  Tensor<T>& table() { return table_; }

 private:
  Tensor<T> table_;  // [max_tokens x dim]
};

inline constexpr double kInitStddev = 0.02;

/// Weights and positional tables ~ N(0, 0.02^2) truncated at +-2 sigma;
/// biases and betas 0; gammas 1. Each entry draws from its own stream
/// derived from (seed, entry index).
template <typename T>
void init_params(ParamStore<T>& store, std::uint64_t seed);

}  // namespace geovit::nn
