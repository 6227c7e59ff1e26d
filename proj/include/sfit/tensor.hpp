#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sfit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;

  std::span<T> ensure_grad();
};

/// Dense row-major array with optional gradient slot.
///
/// A Tensor is a handle: copies share storage and gradient. Use clone() for an
/// independent copy and detach() for a handle that shares values but does not
/// participate in differentiation.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<TensorNode<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> values() const;
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  // Zero-filled when nothing has been accumulated yet.
  std::span<const T> grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  const NodePtr& node() const { return node_; }
  bool same_as(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Ordered record of executed ops for reverse-mode differentiation.
///
/// Ops append an entry only when some operand requires a gradient. backward()
/// replays adjoints in reverse order and consumes the tape: a second backward
/// without a fresh forward is rejected with UsageError.
template <typename T>
class Tape {
 public:
  using NodePtr = typename Tensor<T>::NodePtr;
  using Adjoint = std::function<void()>;

  static bool any_requires_grad(std::initializer_list<const Tensor<T>*> operands);

  // Marks result as differentiable and stores the adjoint. The adjoint reads
  // result's grad and accumulates into the operands that require grad.
  void record(std::vector<NodePtr> operands, const Tensor<T>& result, Adjoint adjoint);

  void backward(const Tensor<T>& loss);
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Entry {
    std::vector<NodePtr> operands;
    NodePtr result;
    Adjoint adjoint;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template struct TensorNode<float>;
extern template struct TensorNode<double>;

}  // namespace sfit
