#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// A Tape records every differentiable operation executed while it is the
// active tape of the calling thread. Operations executed with no active tape,
// or whose inputs do not require gradients, are not recorded and produce
// plain value tensors.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geovit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until materialized
  bool requires_grad = false;
  std::uint64_t tape = 0;      // id of the tape holding the producing node, 0 if none
  std::ptrdiff_t node = -1;    // index of the producing node on that tape

  /// Materializes a zero gradient buffer on first use.
  std::span<T> grad_buffer();
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const T> data() const;
  /// Direct write access; reserved for initializers, optimizers and loaders.
  std::span<T> mutable_data();
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  /// Empty span when no gradient has been materialized.
  std::span<const T> grad() const;
  void zero_grad();

  /// Value copy with no gradient history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Append-only record of operations for one forward pass.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  struct Node {
    std::string_view op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::shared_ptr<TensorImpl<T>> output;
    BackwardFn backward;
  };

  /// Installs this tape as the calling thread's active tape until destroyed.
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

  /// Records `op` producing `output` from `inputs`. The output requires a
  /// gradient iff some input does.
  void record(std::string_view op, std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
              const std::shared_ptr<TensorImpl<T>>& output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every node's backward rule once, in
  /// reverse recording order. Nodes whose output received no gradient are
  /// skipped.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
  std::uint64_t id_ = 0;
  bool consumed_ = false;
};

/// Backward over the calling thread's active tape.
template <typename T>
void backward(const Tensor<T>& loss);

namespace testing {
/// Scales the incoming gradient of every node recorded under `op` by
/// `factor` during backward. Empty name disables the fault. Test hook only.
void set_backward_fault(std::string op, double factor = 1.5);
const std::string& backward_fault_op();
double backward_fault_factor();
}  // namespace testing

extern template struct TensorImpl<float>;
extern template struct TensorImpl<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace geovit
