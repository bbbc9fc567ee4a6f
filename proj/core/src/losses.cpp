#include "tmf/losses.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tmf {
namespace {

template <typename T>
void require_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename T>
void require_region(const BasicTensor<T>& pred, const BasicEvalRegion<T>& region, const char* what) {
  const Shape p = pred.shape();
  const Shape m = region.mask.shape();
  if (m.n != p.n || m.c != 1 || m.h != p.h || m.w != p.w) {
    throw ShapeError(std::string(what) + ": region " + m.str() + " does not cover prediction " + p.str());
  }
}

template <typename T>
BasicTensor<T> zero_like_graph(const BasicTensor<T>& x) {
  return scale(sum(x), T(0));
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0.0 || composition < 0.0 || laplacian < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

template <typename T>
BasicEvalRegion<T> BasicEvalRegion<T>::from_mask(const BasicTensor<T>& mask) {
  BasicEvalRegion r;
  r.mask = mask.detach();
  for (T v : r.mask.data()) r.count += static_cast<double>(v);
  return r;
}

template <typename T>
BasicEvalRegion<T> BasicEvalRegion<T>::from_trimap(const Trimap& trimap) {
  BasicTensor<T> m(Shape{1, 1, trimap.height, trimap.width});
  auto d = m.mutable_data();
  for (std::size_t i = 0; i < trimap.labels.size(); ++i) d[i] = trimap.labels[i] == TrimapLabel::Unknown ? T(1) : T(0);
  return from_mask(m);
}

template <typename T>
BasicEvalRegion<T> BasicEvalRegion<T>::from_one_hot(const BasicTensor<T>& trimap_one_hot) {
  if (trimap_one_hot.c() != 3) throw ShapeError("EvalRegion: expected one-hot trimap, got " + trimap_one_hot.shape().str());
  return from_mask(slice_channels(trimap_one_hot.detach(), 1, 2));
}

template <typename T>
BasicTensor<T> alpha_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt, const BasicEvalRegion<T>& region) {
  require_same(pred, gt, "alpha_loss");
  require_region(pred, region, "alpha_loss");
  if (region.empty()) return zero_like_graph(pred);
  const BasicTensor<T> r = charbonnier(sub(pred, gt), static_cast<T>(kLossEpsilon));
  return scale(sum(mul(r, region.mask)), static_cast<T>(1.0 / region.count));
}

template <typename T>
BasicTensor<T> composition_loss(const BasicTensor<T>& pred, const BasicTensor<T>& fg, const BasicTensor<T>& bg,
                                const BasicTensor<T>& image, const BasicEvalRegion<T>& region) {
  require_region(pred, region, "composition_loss");
  require_same(fg, bg, "composition_loss");
  require_same(fg, image, "composition_loss");
  if (fg.c() != 3 || pred.c() != 1 || fg.n() != pred.n() || fg.h() != pred.h() || fg.w() != pred.w()) {
    throw ShapeError("composition_loss: expected 1-channel prediction and 3-channel images, got " + pred.shape().str() +
                     " and " + fg.shape().str());
  }
  if (region.empty()) return zero_like_graph(pred);
  // pred*F + (1-pred)*B = B + pred*(F-B)
  const BasicTensor<T> comp = add(bg, mul(pred, sub(fg, bg)));
  const BasicTensor<T> r = charbonnier(sub(comp, image), static_cast<T>(kLossEpsilon));
  return scale(sum(mul(r, region.mask)), static_cast<T>(1.0 / (3.0 * region.count)));
}

int laplacian_levels(int h, int w) {
  int levels = 1;
  int m = std::min(h, w);
  while (levels < 5 && m >= 4) {
    m /= 2;
    ++levels;
  }
  return levels;
}

template <typename T>
std::vector<BasicTensor<T>> laplacian_pyramid(const BasicTensor<T>& x, int levels) {
  std::vector<BasicTensor<T>> out;
  BasicTensor<T> current = x;
  for (int l = 0; l + 1 < levels; ++l) {
    const BasicTensor<T> low = binomial_blur5(current);
    out.push_back(sub(current, low));
    current = avg_pool2x2(low);
  }
  out.push_back(current);
  return out;
}

template <typename T>
BasicTensor<T> laplacian_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt) {
  require_same(pred, gt, "laplacian_loss");
  const int levels = laplacian_levels(pred.h(), pred.w());
  const auto pp = laplacian_pyramid(pred, levels);
  const auto pg = laplacian_pyramid(gt, levels);
  BasicTensor<T> total;
  for (int l = 0; l < levels; ++l) {
    BasicTensor<T> term = scale(mean(abs(sub(pp[l], pg[l]))), static_cast<T>(1 << l));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
LossBreakdown<T> total_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt, const BasicTensor<T>& fg,
                            const BasicTensor<T>& bg, const BasicTensor<T>& image, const BasicEvalRegion<T>& region,
                            const LossWeights& weights) {
  weights.validate();
  LossBreakdown<T> out;
  const BasicTensor<T> la = alpha_loss(pred, gt, region);
  const BasicTensor<T> lc = composition_loss(pred, fg, bg, image, region);
  const BasicTensor<T> ll = laplacian_loss(pred, gt);
  out.alpha = static_cast<double>(la.item());
  out.composition = static_cast<double>(lc.item());
  out.laplacian = static_cast<double>(ll.item());
  out.total = add(add(scale(la, static_cast<T>(weights.alpha)), scale(lc, static_cast<T>(weights.composition))),
                  scale(ll, static_cast<T>(weights.laplacian)));
  return out;
}

#define TMF_LOSS_INSTANTIATE(T)                                                                                 \
  template struct BasicEvalRegion<T>;                                                                           \
  template BasicTensor<T> alpha_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicEvalRegion<T>&); \
  template BasicTensor<T> composition_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                              const BasicTensor<T>&, const BasicEvalRegion<T>&);                \
  template std::vector<BasicTensor<T>> laplacian_pyramid<T>(const BasicTensor<T>&, int);                       \
  template BasicTensor<T> laplacian_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template LossBreakdown<T> total_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                          const BasicTensor<T>&, const BasicTensor<T>&, const BasicEvalRegion<T>&, \
                                          const LossWeights&);

TMF_LOSS_INSTANTIATE(float)
TMF_LOSS_INSTANTIATE(double)

}  // namespace tmf
