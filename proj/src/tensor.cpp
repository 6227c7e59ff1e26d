#include "sfit/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "sfit/errors.hpp"

namespace sfit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
std::span<T> TensorNode<T>::ensure_grad() {
  if (grad.empty()) grad.assign(data->size(), T(0));
  return grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<TensorNode<T>>();
  node_->shape = std::move(shape);
  node_->data = std::make_shared<std::vector<T>>(std::move(values));
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw UsageError("undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for shape " + shape_to_string(s));
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!node_) throw UsageError("undefined tensor");
  return *node_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!node_) throw UsageError("undefined tensor");
  return *node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
  return values()[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!node_) throw UsageError("undefined tensor");
  node_->requires_grad = flag;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!node_) throw UsageError("undefined tensor");
  return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_) return;
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  if (!node_) return {};
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = node_->shape;
  n->data = node_->data;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!node_) return {};
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = node_->shape;
  n->data = std::make_shared<std::vector<T>>(*node_->data);
  n->grad = node_->grad;
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
bool Tape<T>::any_requires_grad(std::initializer_list<const Tensor<T>*> operands) {
  return std::any_of(operands.begin(), operands.end(),
                     [](const Tensor<T>* t) { return t != nullptr && t->requires_grad(); });
}

template <typename T>
void Tape<T>::record(std::vector<NodePtr> operands, const Tensor<T>& result, Adjoint adjoint) {
  if (consumed_) throw UsageError("recording on a consumed tape; call reset() first");
  result.node()->requires_grad = true;
  entries_.push_back(Entry{std::move(operands), result.node(), std::move(adjoint)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw UsageError("backward replay on a consumed tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    // Constant loss: every gradient is zero.
    entries_.clear();
    consumed_ = true;
    return;
  }
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [&](const Entry& e) { return e.result == loss.node(); });
  if (it == entries_.rend()) throw UsageError("loss was not produced on this tape");

  loss.node()->ensure_grad()[0] += T(1);
  for (; it != entries_.rend(); ++it) {
    if (it->result->grad.empty()) continue;
    it->adjoint();
  }
  entries_.clear();
  consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
  entries_.clear();
  consumed_ = false;
}

template struct TensorNode<float>;
template struct TensorNode<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace sfit
