#include "tmf/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace tmf {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : node_(std::make_shared<detail::TensorNode<T>>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
  node_->shape = shape;
  node_->data.assign(shape.numel(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, const std::vector<T>& values)
    : BasicTensor(shape, Buffer<T>(values.begin(), values.end())) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, Buffer<T> values) : node_(std::make_shared<detail::TensorNode<T>>()) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " + shape.str());
  }
  node_->shape = shape;
  node_->data = std::move(values);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return node_->data[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor<T>(node_->shape, node_->data);
}

template <typename T>
void BasicTape<T>::record(std::function<void()> backward_fn) {
  if (consumed_) throw TapeError("cannot record on a tape that has already been consumed by backward()");
  entries_.push_back(std::move(backward_fn));
}

template <typename T>
void BasicTape<T>::backward(const BasicTensor<T>& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape");
  if (!loss.defined() || loss.numel() != 1) throw TapeError("backward() requires a scalar loss");
  consumed_ = true;
  if (!loss.requires_grad()) {
    entries_.clear();
    return;
  }
  auto& g = loss.node()->grad_buffer();
  g[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    (*it)();
    *it = nullptr;  // release saved tensors as soon as possible
  }
  entries_.clear();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace tmf
