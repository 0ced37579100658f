#include "geovit/param_store.hpp"

#include "geovit/errors.hpp"

namespace geovit {

template <typename T>
Tensor<T> ParamStore<T>::add(std::string name, Shape shape, ParamKind kind) {
  if (index_.count(name)) throw ContractViolation("duplicate parameter name '" + name + "'");
  Tensor<T> value = Tensor<T>::zeros(shape, true);
  index_.emplace(name, entries_.size());
  entries_.push_back(ParamEntry<T>{std::move(name), kind, value, Tensor<T>::zeros(shape), Tensor<T>::zeros(shape)});
  return value;
}

template <typename T>
std::size_t ParamStore<T>::num_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename T>
ParamEntry<T>& ParamStore<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <typename T>
const ParamEntry<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace geovit
