#include "geovit/layers.hpp"

#include <array>
#include <cmath>

#include "geovit/errors.hpp"
#include "geovit/rng.hpp"

namespace geovit::nn {

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out)
    : weight_(store.add(prefix + ".weight", {in, out}, ParamKind::kWeight)),
      bias_(store.add(prefix + ".bias", {out}, ParamKind::kBias)) {}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  if (x.shape().back() != weight_.dim(0)) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " does not end in " +
                         std::to_string(weight_.dim(0)));
  }
  return add(matmul(x, weight_), bias_);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamStore<T>& store, const std::string& prefix, std::size_t dim, T eps)
    : gamma_(store.add(prefix + ".gamma", {dim}, ParamKind::kGamma)),
      beta_(store.add(prefix + ".beta", {dim}, ParamKind::kBeta)),
      eps_(eps) {
  for (T& g : gamma_.mutable_data()) g = T(1);
}

namespace {

struct HeadLayout {
  std::size_t lead, n, heads, head_dim;
};

template <typename T>
HeadLayout head_layout(const Tensor<T>& x, std::size_t num_heads, const char* what) {
  if (x.rank() < 2) throw DimensionError(std::string("attention: ") + what + " must have rank >= 2");
  const std::size_t d = x.shape().back();
  if (num_heads == 0 || d % num_heads != 0) {
    throw ConfigError("attention: embed dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  const std::size_t n = x.shape()[x.rank() - 2];
  return {x.numel() / (n * d), n, num_heads, d / num_heads};
}

/// [.., n, d] -> [lead, heads, n, head_dim]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, const HeadLayout& l) {
  static constexpr std::array<std::size_t, 4> kAxes{0, 2, 1, 3};
  return permute(reshape(x, {l.lead, l.n, l.heads, l.head_dim}), std::span<const std::size_t>(kAxes));
}

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const HeadLayout& lq,
               const HeadLayout& lk) {
  if (k.shape() != v.shape()) {
    throw DimensionError("attention: keys " + shape_to_string(k.shape()) + " and values " +
                         shape_to_string(v.shape()) + " differ");
  }
  if (lk.n == 0) throw ContractViolation("attention: empty key set");
  if (lq.lead != lk.lead || q.shape().back() != k.shape().back()) {
    throw DimensionError("attention: queries " + shape_to_string(q.shape()) + " incompatible with keys " +
                         shape_to_string(k.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> attention_logits(const Tensor<T>& q, const Tensor<T>& k, std::size_t num_heads) {
  const HeadLayout lq = head_layout(q, num_heads, "queries");
  const HeadLayout lk = head_layout(k, num_heads, "keys");
  check_qkv(q, k, k, lq, lk);
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(lq.head_dim));
  return scale(matmul(split_heads(q, lq), transpose(split_heads(k, lk))), inv_sqrt_dk);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t num_heads,
                               Tensor<T>* weights) {
  const HeadLayout lq = head_layout(q, num_heads, "queries");
  const HeadLayout lk = head_layout(k, num_heads, "keys");
  check_qkv(q, k, v, lq, lk);
  Tensor<T> probs = softmax(attention_logits(q, k, num_heads), 3);
  if (weights) *weights = probs;
  Tensor<T> heads = matmul(probs, split_heads(v, lk));  // [lead, h, n_q, dk]
  static constexpr std::array<std::size_t, 4> kAxes{0, 2, 1, 3};
  Shape out_shape = q.shape();
  return reshape(permute(heads, std::span<const std::size_t>(kAxes)), std::move(out_shape));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamStore<T>& store, const std::string& prefix, std::size_t dim,
                                          std::size_t num_heads)
    : q_(store, prefix + ".q", dim, dim),
      k_(store, prefix + ".k", dim, dim),
      v_(store, prefix + ".v", dim, dim),
      o_(store, prefix + ".o", dim, dim),
      num_heads_(num_heads) {
  if (num_heads == 0 || dim % num_heads != 0) {
    throw ConfigError("attention: embed dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const {
  return o_(multi_head_attention(q, k, v, num_heads_));
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::self_attention(const Tensor<T>& tokens) const {
  return attend(q_(tokens), k_(tokens), v_(tokens));
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::cross_attention(const Tensor<T>& queries_from,
                                                 const Tensor<T>& keys_values_from) const {
  return attend(q_(queries_from), k_(keys_values_from), v_(keys_values_from));
}

template <typename T>
FeedForward<T>::FeedForward(ParamStore<T>& store, const std::string& prefix, std::size_t dim, std::size_t ratio)
    : fc1_(store, prefix + ".fc1", dim, ratio * dim), fc2_(store, prefix + ".fc2", ratio * dim, dim) {
  if (ratio == 0) throw ConfigError("feed-forward expansion ratio must be positive");
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, std::size_t patch) {
  if (images.rank() < 3) {
    throw DimensionError("patchify: expected [.., bands, H, W], got " + shape_to_string(images.shape()));
  }
  const Shape& s = images.shape();
  const std::size_t r = s.size();
  const std::size_t bands = s[r - 3], h = s[r - 2], w = s[r - 1];
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by patch size " + std::to_string(patch));
  }
  const std::size_t lead = images.numel() / (bands * h * w);
  const std::size_t gh = h / patch, gw = w / patch;
  const std::size_t tokens = gh * gw, width = patch * patch * bands;
  std::vector<std::size_t> indices;
  indices.reserve(images.numel());
  for (std::size_t b = 0; b < lead; ++b)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px)
        for (std::size_t c = 0; c < bands; ++c)
          for (std::size_t iy = 0; iy < patch; ++iy)
            for (std::size_t ix = 0; ix < patch; ++ix)
              indices.push_back(((b * bands + c) * h + py * patch + iy) * w + px * patch + ix);
  Shape out(s.begin(), s.end() - 3);
  out.push_back(tokens);
  out.push_back(width);
  return gather(images, std::span<const std::size_t>(indices), std::move(out));
}

template <typename T>
PatchEmbedder<T>::PatchEmbedder(ParamStore<T>& store, const std::string& prefix, std::size_t bands,
                                std::size_t patch, std::size_t dim)
    : proj_(store, prefix + ".proj", patch * patch * bands, dim), bands_(bands), patch_(patch) {}

template <typename T>
Tensor<T> PatchEmbedder<T>::operator()(const Tensor<T>& images) const {
  if (images.rank() < 3 || images.shape()[images.rank() - 3] != bands_) {
    throw ConfigError("patch embed: expected " + std::to_string(bands_) + " bands, got image " +
                      shape_to_string(images.shape()));
  }
  return proj_(patchify(images, patch_));
}

template <typename T>
PositionalEmbedding<T>::PositionalEmbedding(ParamStore<T>& store, const std::string& prefix,
                                            std::size_t max_tokens, std::size_t dim)
    : table_(store.add(prefix + ".table", {max_tokens, dim}, ParamKind::kPositional)) {}

template <typename T>
Tensor<T> PositionalEmbedding<T>::operator()(const Tensor<T>& tokens) const {
  const std::size_t n = tokens.shape()[tokens.rank() - 2];
  if (n > table_.dim(0)) {
    throw ConfigError("positional table covers " + std::to_string(table_.dim(0)) + " tokens, got " +
                      std::to_string(n));
  }
  return add(tokens, n == table_.dim(0) ? table_ : slice(table_, 0, 0, n));
}

template <typename T>
void init_params(ParamStore<T>& store, std::uint64_t seed) {
  std::uint64_t index = 0;
  for (auto& entry : store.entries()) {
    Rng rng(derive_seed(seed, index++));
    auto values = entry.value.mutable_data();
    switch (entry.kind) {
      case ParamKind::kWeight:
      case ParamKind::kPositional:
        for (T& v : values) v = static_cast<T>(rng.truncated_normal(kInitStddev, 2.0));
        break;
      case ParamKind::kBias:
      case ParamKind::kBeta:
        for (T& v : values) v = T(0);
        break;
      case ParamKind::kGamma:
        for (T& v : values) v = T(1);
        break;
    }
  }
}

#define GEOVIT_INSTANTIATE_LAYERS(T)                                                                      \
  template class Linear<T>;                                                                               \
  template class LayerNorm<T>;                                                                            \
  template class MultiHeadAttention<T>;                                                                   \
  template class FeedForward<T>;                                                                          \
  template class PatchEmbedder<T>;                                                                        \
  template class PositionalEmbedding<T>;                                                                  \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                                          Tensor<T>*);                                                    \
  template Tensor<T> attention_logits(const Tensor<T>&, const Tensor<T>&, std::size_t);                   \
  template Tensor<T> patchify(const Tensor<T>&, std::size_t);                                             \
  template void init_params(ParamStore<T>&, std::uint64_t);

GEOVIT_INSTANTIATE_LAYERS(float)
GEOVIT_INSTANTIATE_LAYERS(double)

#undef GEOVIT_INSTANTIATE_LAYERS

}  // namespace geovit::nn
