#include <algorithm>
#include <cmath>

#include "op_support.hpp"
#include "tmf/ops.hpp"

namespace tmf {
namespace {

using detail::NodePtr;

struct BroadcastPlan {
  Shape out;
  std::size_t a_stride[4];
  std::size_t b_stride[4];
  bool same = false;
};

void strides_for(const Shape& s, const Shape& out, std::size_t* st) {
  const std::size_t natural[4] = {static_cast<std::size_t>(s.c) * s.h * s.w, static_cast<std::size_t>(s.h) * s.w,
                                  static_cast<std::size_t>(s.w), 1};
  const int ext[4] = {s.n, s.c, s.h, s.w};
  const int oext[4] = {out.n, out.c, out.h, out.w};
  for (int d = 0; d < 4; ++d) st[d] = (ext[d] == 1 && oext[d] != 1) ? 0 : natural[d];
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const int ae[4] = {a.n, a.c, a.h, a.w};
  const int be[4] = {b.n, b.c, b.h, b.w};
  int oe[4];
  for (int d = 0; d < 4; ++d) {
    if (ae[d] == be[d] || be[d] == 1) {
      oe[d] = ae[d];
    } else if (ae[d] == 1) {
      oe[d] = be[d];
    } else {
      throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
    }
  }
  BroadcastPlan p;
  p.out = Shape{oe[0], oe[1], oe[2], oe[3]};
  p.same = (a == b);
  strides_for(a, p.out, p.a_stride);
  strides_for(b, p.out, p.b_stride);
  return p;
}

// Visits every output element with the matching operand offsets.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
  if (p.same) {
    const std::size_t total = p.out.numel();
    for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  std::size_t o = 0;
  for (int n = 0; n < p.out.n; ++n) {
    for (int c = 0; c < p.out.c; ++c) {
      for (int h = 0; h < p.out.h; ++h) {
        const std::size_t ab = n * p.a_stride[0] + c * p.a_stride[1] + h * p.a_stride[2];
        const std::size_t bb = n * p.b_stride[0] + c * p.b_stride[1] + h * p.b_stride[2];
        for (int w = 0; w < p.out.w; ++w, ++o) fn(o, ab + w * p.a_stride[3], bb + w * p.b_stride[3]);
      }
    }
  }
}

template <typename T, typename Fwd, typename GradA, typename GradB>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* name, Fwd fwd, GradA ga,
                      GradB gb) {
  const BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), name);
  BasicTensor<T> out(plan.out);
  {
    const T* ad = a.data().data();
    const T* bd = b.data().data();
    T* od = out.mutable_data().data();
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { od[o] = fwd(ad[ia], bd[ib]); });
  }
  if (detail::should_record<T>({&a, &b})) {
    detail::attach(out, [plan, an = a.node(), bn = b.node(), on = out.node(), ga, gb]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      const T* ad = an->data.data();
      const T* bd = bn->data.data();
      if (an->requires_grad) {
        T* gad = an->grad_buffer().data();
        for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          gad[ia] += ga((*g)[o], ad[ia], bd[ib], on->data[o]);
        });
      }
      if (bn->requires_grad) {
        T* gbd = bn->grad_buffer().data();
        for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          gbd[ib] += gb((*g)[o], ad[ia], bd[ib], on->data[o]);
        });
      }
    });
  }
  return out;
}

// y = f(x) with dy/dx expressed through (x, y).
template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary(const BasicTensor<T>& x, Fwd fwd, Deriv deriv) {
  BasicTensor<T> out(x.shape());
  {
    const auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), deriv]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i] * deriv(xn->data[i], on->data[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T g, T, T, T) { return g; }, [](T g, T, T, T) { return g; });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T g, T, T, T) { return g; }, [](T g, T, T, T) { return -g; });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T g, T, T y, T) { return g * y; },
      [](T g, T x, T, T) { return g * x; });
}

template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T g, T, T y, T) { return g / y; },
      [](T g, T, T y, T out) { return -g * out / y; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value) {
  return unary(
      x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> one_minus(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
BasicTensor<T> sqrt(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> charbonnier(const BasicTensor<T>& x, T eps) {
  const T eps2 = eps * eps;
  return unary(
      x, [eps2](T v) { return std::sqrt(v * v + eps2); }, [](T v, T y) { return v / y; });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  return unary(
      x, [slope](T v) { return v >= T(0) ? v : v * slope; }, [slope](T v, T) { return v >= T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(acc);
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node()]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      const T gv = (*g)[0];
      for (T& v : xn->grad_buffer()) v += gv;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  BasicTensor<T> out(Shape{s.n, s.c, 1, 1});
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
      T acc = T(0);
      for (std::size_t i = 0; i < plane; ++i) acc += xd[nc * plane + i];
      od[nc] = acc / static_cast<T>(plane);
    }
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), plane]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t nc = 0; nc < g->size(); ++nc) {
        const T v = (*g)[nc] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) gx[nc * plane + i] += v;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat of an empty list");
  const Shape first = xs.front().shape();
  int channels = 0;
  for (const auto& x : xs) {
    const Shape s = x.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat: mismatched extents " + first.str() + " vs " + s.str());
    }
    channels += s.c;
  }
  const std::size_t plane = first.plane();
  BasicTensor<T> out(Shape{first.n, channels, first.h, first.w});
  T* od = out.mutable_data().data();
  for (int n = 0; n < first.n; ++n) {
    std::size_t offset = static_cast<std::size_t>(n) * channels * plane;
    for (const auto& x : xs) {
      const std::size_t len = static_cast<std::size_t>(x.c()) * plane;
      const T* src = x.data().data() + static_cast<std::size_t>(n) * len;
      std::copy(src, src + len, od + offset);
      offset += len;
    }
  }
  if (detail::should_record(xs)) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    detail::attach(out, [nodes, on = out.node(), channels, plane, batch = first.n]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      for (int n = 0; n < batch; ++n) {
        std::size_t offset = static_cast<std::size_t>(n) * channels * plane;
        for (const auto& node : nodes) {
          const std::size_t len = static_cast<std::size_t>(node->shape.c) * plane;
          if (node->requires_grad) {
            T* dst = node->grad_buffer().data() + static_cast<std::size_t>(n) * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += (*g)[offset + i];
          }
          offset += len;
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.c || begin >= end) {
    throw ShapeError("slice_channels: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") for " + s.str());
  }
  const int oc = end - begin;
  const std::size_t plane = s.plane();
  BasicTensor<T> out(Shape{s.n, oc, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    const T* src = x.data().data() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
    std::copy(src, src + oc * plane, out.mutable_data().data() + static_cast<std::size_t>(n) * oc * plane);
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), begin, oc, plane, s]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (int n = 0; n < s.n; ++n) {
        T* dst = gx.data() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
        const T* src = g->data() + static_cast<std::size_t>(n) * oc * plane;
        for (std::size_t i = 0; i < oc * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> flip_horizontal(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  BasicTensor<T> out(s);
  const std::size_t rows = static_cast<std::size_t>(s.n) * s.c * s.h;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int j = 0; j < s.w; ++j) out.mutable_data()[r * s.w + j] = x.data()[r * s.w + (s.w - 1 - j)];
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), rows, w = s.w]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < w; ++j) gx[r * w + (w - 1 - j)] += (*g)[r * w + j];
      }
    });
  }
  return out;
}

#define TMF_BINARY(fn)                                                                                 \
  template BasicTensor<float> fn<float>(const BasicTensor<float>&, const BasicTensor<float>&); \
  template BasicTensor<double> fn<double>(const BasicTensor<double>&, const BasicTensor<double>&);
TMF_BINARY(add)
TMF_BINARY(sub)
TMF_BINARY(mul)
TMF_BINARY(div)
#undef TMF_BINARY

#define TMF_SCALAR_ARG(fn)                                                 \
  template BasicTensor<float> fn<float>(const BasicTensor<float>&, float); \
  template BasicTensor<double> fn<double>(const BasicTensor<double>&, double);
TMF_SCALAR_ARG(scale)
TMF_SCALAR_ARG(add_scalar)
TMF_SCALAR_ARG(charbonnier)
TMF_SCALAR_ARG(leaky_relu)
#undef TMF_SCALAR_ARG

TMF_INSTANTIATE_UNARY(one_minus)
TMF_INSTANTIATE_UNARY(square)
TMF_INSTANTIATE_UNARY(sqrt)
TMF_INSTANTIATE_UNARY(abs)
TMF_INSTANTIATE_UNARY(sum)
TMF_INSTANTIATE_UNARY(mean)
TMF_INSTANTIATE_UNARY(global_avg_pool)
TMF_INSTANTIATE_UNARY(flip_horizontal)

template BasicTensor<float> clamp<float>(const BasicTensor<float>&, float, float);
template BasicTensor<double> clamp<double>(const BasicTensor<double>&, double, double);
template BasicTensor<float> concat<float>(const std::vector<BasicTensor<float>>&);
template BasicTensor<double> concat<double>(const std::vector<BasicTensor<double>>&);
template BasicTensor<float> slice_channels<float>(const BasicTensor<float>&, int, int);
template BasicTensor<double> slice_channels<double>(const BasicTensor<double>&, int, int);

}  // namespace tmf
