#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmf {

enum class Precision { Standard, High };

// Dense NCHW extents. Weights reuse the same layout as (out, in, kh, kw).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Every buffer starts on a 64-byte boundary. Vectorised kernels peel
// differently depending on alignment, so unaligned storage would make
// results depend on where the allocator happened to place a tensor.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until the first accumulation
  bool requires_grad = false;

  Buffer<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  static constexpr Precision precision = sizeof(T) >= sizeof(double) ? Precision::High : Precision::Standard;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, const std::vector<T>& values);
  BasicTensor(Shape shape, Buffer<T> values);

  static BasicTensor scalar(T value) { return BasicTensor(Shape{1, 1, 1, 1}, value); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int n() const { return node_->shape.n; }
  int c() const { return node_->shape.c; }
  int h() const { return node_->shape.h; }
  int w() const { return node_->shape.w; }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // In-place access. Only meant for leaves (parameters, optimizer updates, fixtures).
  std::span<T> mutable_data() { return node_->data; }

  T operator()(int n, int c, int h, int w) const { return node_->data[index(n, c, h, w)]; }
  std::size_t index(int n, int c, int h, int w) const {
    const Shape& s = node_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on = true);
  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad();

  // Copy that is not connected to any tape.
  BasicTensor detach() const;
  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return BasicTensor<U>(node_->shape, std::move(out));
  }

  const std::shared_ptr<detail::TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Records backward closures in execution order. Ops append to the tape that is
// current on the calling thread (see BasicTapeScope) whenever one of their
// inputs requires a gradient.
template <typename T>
class BasicTape {
 public:
  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  void record(std::function<void()> backward_fn);
  // Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse order.
  void backward(const BasicTensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  static BasicTape* current() { return current_; }

 private:
  template <typename>
  friend class BasicTapeScope;

  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
  static inline thread_local BasicTape* current_ = nullptr;
};

template <typename T>
class BasicTapeScope {
 public:
  explicit BasicTapeScope(BasicTape<T>& tape) : BasicTapeScope(&tape) {}
  // A null tape disables recording inside the scope.
  explicit BasicTapeScope(BasicTape<T>* tape) : previous_(BasicTape<T>::current_) { BasicTape<T>::current_ = tape; }
  ~BasicTapeScope() { BasicTape<T>::current_ = previous_; }
  BasicTapeScope(const BasicTapeScope&) = delete;
  BasicTapeScope& operator=(const BasicTapeScope&) = delete;

 private:
  BasicTape<T>* previous_;
};

using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;
using TapeScope = BasicTapeScope<float>;
using TapeScopeD = BasicTapeScope<double>;

// Suspends recording on this thread for the lifetime of the guard.
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard() : scope_(static_cast<BasicTape<T>*>(nullptr)) {}

 private:
  BasicTapeScope<T> scope_;
};

}  // namespace tmf
