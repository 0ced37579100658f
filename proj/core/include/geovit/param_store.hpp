#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "geovit/tensor.hpp"

namespace geovit {

/// Initialization family of a parameter.
enum class ParamKind : std::uint8_t { kWeight, kBias, kGamma, kBeta, kPositional };

template <typename T>
struct ParamEntry {
  std::string name;
  ParamKind kind;
  Tensor<T> value;
  Tensor<T> adam_m;  // first-moment estimate
  Tensor<T> adam_v;  // second-moment estimate
};

/// Named, ordered collection of trainable tensors plus AdamW state.
/// Iteration follows registration order.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  /// Registers a zero-filled parameter; names must be unique.
  Tensor<T> add(std::string name, Shape shape, ParamKind kind);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_elements() const;
  std::vector<ParamEntry<T>>& entries() noexcept { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const noexcept { return entries_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ParamEntry<T>& at(const std::string& name);
  const ParamEntry<T>& at(const std::string& name) const;

  std::int64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::int64_t t) noexcept { step_count_ = t; }

  void zero_grad();

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_count_ = 0;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace geovit
