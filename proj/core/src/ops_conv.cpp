#include <algorithm>
#include <Eigen/Core>

#include "op_support.hpp"
#include "tmf/ops.hpp"

namespace tmf {
namespace {

thread_local std::uint64_t g_conv_macs = 0;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k, stride, pad, dilation;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  int patch() const { return in_c * k * k; }
  int out_plane() const { return out_h * out_w; }
};

// Output columns [lo, hi) read inside the input row for kernel column kx.
inline void valid_range(const ConvGeometry& g, int kx, int& lo, int& hi) {
  const int off = kx * g.dilation - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = g.in_w - off <= 0 ? 0 : (g.in_w - off - 1) / g.stride + 1;
  hi = std::min(hi, g.out_w);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const int plane = g.out_plane();
  for (int ci = 0; ci < g.in_c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(ci) * g.k * g.k + ky * g.k + kx) * plane;
        int lo, hi;
        valid_range(g, kx, lo, hi);
        const int off = kx * g.dilation - g.pad;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.in_w + off;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* gx) {
  const int plane = g.out_plane();
  for (int ci = 0; ci < g.in_c; ++ci) {
    T* gc = gx + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(ci) * g.k * g.k + ky * g.k + kx) * plane;
        int lo, hi;
        valid_range(g, kx, lo, hi);
        const int off = kx * g.dilation - g.pad;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + oy * g.out_w;
          T* dst = gc + static_cast<std::size_t>(iy) * g.in_w + off;
          if (g.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::uint64_t conv_mac_counter() { return g_conv_macs; }
void reset_conv_mac_counter() { g_conv_macs = 0; }

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dOptions options) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel " + ws.str());
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " + std::to_string(xs.c));
  }
  if (options.stride < 1 || options.dilation < 1 || options.padding < 0) {
    throw std::invalid_argument("conv2d: invalid stride/dilation/padding");
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.numel()) + " != out channels " + std::to_string(ws.n));
  }
  ConvGeometry g{xs.c,
                 xs.h,
                 xs.w,
                 ws.n,
                 conv_output_size(xs.h, ws.h, options.stride, options.padding, options.dilation),
                 conv_output_size(xs.w, ws.w, options.stride, options.padding, options.dilation),
                 ws.h,
                 options.stride,
                 options.padding,
                 options.dilation};
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("conv2d: empty output for input " + xs.str());

  BasicTensor<T> out(Shape{xs.n, g.out_c, g.out_h, g.out_w});
  const int patch = g.patch();
  const int plane = g.out_plane();
  g_conv_macs += static_cast<std::uint64_t>(out.numel()) * static_cast<std::uint64_t>(patch);

  Buffer<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(patch) * plane);
  ConstMapMat<T> wmat(weight.data().data(), g.out_c, patch);
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* colp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, cols.data());
      colp = cols.data();
    }
    MapMat<T> omat(out.mutable_data().data() + static_cast<std::size_t>(n) * g.out_c * plane, g.out_c, plane);
    omat.noalias() = wmat * ConstMapMat<T>(colp, patch, plane);
    if (bias.defined()) {
      for (int co = 0; co < g.out_c; ++co) omat.row(co).array() += bias.data()[co];
    }
  }

  if (detail::should_record<T>({&x, &weight, &bias})) {
    detail::attach(out, [g, xn = x.node(), wn = weight.node(), bn = bias.node(), on = out.node()]() {
      const auto* gout = detail::upstream(on);
      if (!gout) return;
      const int patch = g.patch();
      const int plane = g.out_plane();
      const int batch = xn->shape.n;
      const std::size_t in_len = static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w;
      Buffer<T> cols(static_cast<std::size_t>(patch) * plane);
      ConstMapMat<T> wmat(wn->data.data(), g.out_c, patch);
      for (int n = 0; n < batch; ++n) {
        ConstMapMat<T> gmat(gout->data() + static_cast<std::size_t>(n) * g.out_c * plane, g.out_c, plane);
        const T* xin = xn->data.data() + n * in_len;
        if (wn->requires_grad) {
          const T* colp = xin;
          if (!g.pointwise()) {
            im2col(xin, g, cols.data());
            colp = cols.data();
          }
          MapMat<T> gw(wn->grad_buffer().data(), g.out_c, patch);
          gw.noalias() += gmat * ConstMapMat<T>(colp, patch, plane).transpose();
        }
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (int co = 0; co < g.out_c; ++co) gb[co] += gmat.row(co).sum();
        }
        if (xn->requires_grad) {
          T* gx = xn->grad_buffer().data() + n * in_len;
          if (g.pointwise()) {
            MapMat<T>(gx, patch, plane).noalias() += wmat.transpose() * gmat;
          } else {
            MapMat<T>(cols.data(), patch, plane).noalias() = wmat.transpose() * gmat;
            col2im_add(cols.data(), g, gx);
          }
        }
      }
    });
  }
  return out;
}

template BasicTensor<float> conv2d<float>(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const BasicTensor<float>&, Conv2dOptions);
template BasicTensor<double> conv2d<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                            const BasicTensor<double>&, Conv2dOptions);

}  // namespace tmf
