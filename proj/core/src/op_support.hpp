#pragma once

#include <initializer_list>
#include <utility>

#include "tmf/tensor.hpp"

namespace tmf::detail {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
bool should_record(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (BasicTape<T>::current() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
bool should_record(const std::vector<BasicTensor<T>>& inputs) {
  if (BasicTape<T>::current() == nullptr) return false;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Marks `out` as differentiable and appends `fn` to the current tape.
template <typename T, typename Fn>
void attach(BasicTensor<T>& out, Fn&& fn) {
  out.node()->requires_grad = true;
  BasicTape<T>::current()->record(std::forward<Fn>(fn));
}

// Output gradient, or nullptr if nothing flowed into it.
template <typename T>
const Buffer<T>* upstream(const NodePtr<T>& out) {
  return out->grad.size() == out->data.size() ? &out->grad : nullptr;
}

template <typename T>
bool wants(const NodePtr<T>& in) {
  return in && in->requires_grad;
}

}  // namespace tmf::detail

#define TMF_INSTANTIATE_UNARY(fn)                                   \
  template BasicTensor<float> fn<float>(const BasicTensor<float>&); \
  template BasicTensor<double> fn<double>(const BasicTensor<double>&);
