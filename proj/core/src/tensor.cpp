#include "geovit/tensor.hpp"

#include <atomic>

#include <algorithm>
#include <sstream>

#include "geovit/errors.hpp"

namespace geovit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
std::span<T> TensorImpl<T>::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), T(0));
  return grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " elements, data has " +
                         std::to_string(data.size()));
  }
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return Tensor(shape, std::vector<T>(shape_numel(shape), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

namespace {
template <typename Impl>
const Impl& checked(const std::shared_ptr<Impl>& impl) {
  if (!impl) throw ContractViolation("use of an undefined tensor");
  return *impl;
}
}  // namespace

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked(impl_).shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  }
  return s[axis];
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return checked(impl_).data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  checked(impl_);
  return impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& d = checked(impl_).data;
  if (d.size() != 1) {
    throw ContractViolation("item() on tensor of shape " + shape_to_string(impl_->shape));
  }
  return d[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked(impl_).requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  checked(impl_);
  impl_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !checked(impl_).grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return checked(impl_).grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  checked(impl_);
  impl_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  const auto& impl = checked(impl_);
  return Tensor(impl.shape, impl.data, false);
}

namespace testing {
namespace {
std::string& fault_op() {
  static std::string op;
  return op;
}
double& fault_factor() {
  static double factor = 1.0;
  return factor;
}
}  // namespace

void set_backward_fault(std::string op, double factor) {
  fault_op() = std::move(op);
  fault_factor() = factor;
}
const std::string& backward_fault_op() { return fault_op(); }
double backward_fault_factor() { return fault_factor(); }
}  // namespace testing

namespace {
template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
}  // namespace

template <typename T>
Tape<T>::Tape() : previous_(active_tape<T>()) {
  static std::atomic<std::uint64_t> next_id{1};
  id_ = next_id.fetch_add(1, std::memory_order_relaxed);
  active_tape<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  active_tape<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() noexcept {
  return active_tape<T>();
}

template <typename T>
void Tape<T>::record(std::string_view op, std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                     const std::shared_ptr<TensorImpl<T>>& output, BackwardFn backward) {
  if (consumed_) throw ContractViolation("recording onto a tape after backward()");
  output->requires_grad = true;
  output->tape = id_;
  output->node = static_cast<std::ptrdiff_t>(nodes_.size());
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractViolation("backward() requires a scalar loss, got " +
                            (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  const auto& impl = loss.impl();
  if (impl->tape != id_ || impl->node < 0) {
    throw ContractViolation("backward() loss was not produced on the active tape");
  }
  if (consumed_) throw ContractViolation("backward() called twice on one tape");
  consumed_ = true;

  impl->grad_buffer()[0] += T(1);
  const std::string& fault = testing::backward_fault_op();
  std::vector<T> scaled;
  for (std::size_t i = static_cast<std::size_t>(impl->node) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.output->grad.empty()) continue;
    if (!fault.empty() && n.op == fault) {
      scaled = n.output->grad;
      for (T& g : scaled) g *= static_cast<T>(testing::backward_fault_factor());
      n.backward(scaled);
    } else {
      n.backward(n.output->grad);
    }
    // Intermediate gradients are no longer needed once propagated.
    n.backward = nullptr;
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  if (!tape) throw ContractViolation("backward() without an active tape");
  tape->backward(loss);
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace geovit
