#include "tmf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tmf/losses.hpp"
#include "tmf/matting_ops.hpp"
#include "tmf/network.hpp"

namespace tmf {
namespace {

using Leaves = std::vector<std::pair<std::string, TensorD>>;

TensorD uniform(Shape s, Rng& rng, double lo, double hi) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(lo, hi);
  TensorD t(s, std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Values in [lo, hi] with magnitude at least `gap` from every point in `kinks`.
TensorD away_from(Shape s, Rng& rng, double lo, double hi, std::vector<double> kinks, double gap) {
  std::vector<double> v(s.numel());
  for (double& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < gap; }));
  }
  TensorD t(s, std::move(v));
  t.set_requires_grad(true);
  return t;
}

TensorD random_one_hot(int n, int h, int w, Rng& rng, int block) {
  TensorD t(Shape{n, 3, h, w});
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; y += block)
      for (int x = 0; x < w; x += block) {
        const int label = rng.uniform_int(0, 2);
        for (int yy = y; yy < std::min(h, y + block); ++yy)
          for (int xx = x; xx < std::min(w, x + block); ++xx) t.mutable_data()[t.index(b, label, yy, xx)] = 1.0;
      }
  return t;
}

void add_params(const ParamList<double>& params, Leaves& leaves) {
  for (const auto& p : params)
    if (p.trainable) leaves.emplace_back(p.name, p.tensor);
}

struct Entry {
  std::size_t default_probes;
  std::function<GradCheckResult(const std::string&, const GradCheckOptions&)> run;
};

using Registry = std::map<std::string, Entry>;

// Check of a function of freshly drawn leaves only.
template <typename Build>
Entry simple(std::size_t probes, Build build) {
  return Entry{probes, [build](const std::string& name, const GradCheckOptions& o) {
                 Rng rng(o.seed);
                 Leaves leaves;
                 std::function<TensorD()> f = build(rng, leaves);
                 return check_gradients(name, f, leaves, o);
               }};
}

Registry make_registry() {
  Registry r;
  const Shape s4{2, 3, 4, 5};

  auto binary = [&](auto op, double lo, double hi) {
    return simple(0, [op, lo, hi](Rng& rng, Leaves& l) {
      TensorD a = uniform(Shape{2, 3, 4, 5}, rng, -1, 1);
      TensorD b = uniform(Shape{1, 3, 1, 5}, rng, lo, hi);
      l = {{"a", a}, {"b", b}};
      return std::function<TensorD()>([=] { return op(a, b); });
    });
  };
  r["add"] = binary([](const TensorD& a, const TensorD& b) { return add(a, b); }, -1, 1);
  r["sub"] = binary([](const TensorD& a, const TensorD& b) { return sub(a, b); }, -1, 1);
  r["mul"] = binary([](const TensorD& a, const TensorD& b) { return mul(a, b); }, -1, 1);
  r["div"] = binary([](const TensorD& a, const TensorD& b) { return div(a, b); }, 0.5, 1.5);

  auto unary = [&](auto op, double lo, double hi, std::vector<double> kinks = {}) {
    return simple(0, [op, lo, hi, kinks, s4](Rng& rng, Leaves& l) {
      TensorD x = away_from(s4, rng, lo, hi, kinks, 0.02);
      l = {{"x", x}};
      return std::function<TensorD()>([=] { return op(x); });
    });
  };
  r["scale"] = unary([](const TensorD& x) { return scale(x, -1.7); }, -1, 1);
  r["add_scalar"] = unary([](const TensorD& x) { return add_scalar(x, 0.3); }, -1, 1);
  r["one_minus"] = unary([](const TensorD& x) { return one_minus(x); }, -1, 1);
  r["square"] = unary([](const TensorD& x) { return square(x); }, -1, 1);
  r["sqrt"] = unary([](const TensorD& x) { return sqrt(x); }, 0.3, 2);
  r["abs"] = unary([](const TensorD& x) { return abs(x); }, -1, 1, {0.0});
  r["charbonnier"] = unary([](const TensorD& x) { return charbonnier(x, 1e-3); }, -1, 1);
  r["leaky_relu"] = unary([](const TensorD& x) { return leaky_relu(x, 0.01); }, -1, 1, {0.0});
  r["clamp"] = unary([](const TensorD& x) { return clamp(x, 0.0, 1.0); }, -0.5, 1.5, {0.0, 1.0});
  r["sum"] = unary([](const TensorD& x) { return sum(x); }, -1, 1);
  r["mean"] = unary([](const TensorD& x) { return mean(x); }, -1, 1);
  r["global_avg_pool"] = unary([](const TensorD& x) { return global_avg_pool(x); }, -1, 1);
  r["slice_channels"] = unary([](const TensorD& x) { return slice_channels(x, 1, 3); }, -1, 1);
  r["flip_horizontal"] = unary([](const TensorD& x) { return flip_horizontal(x); }, -1, 1);
  r["concat"] = simple(0, [](Rng& rng, Leaves& l) {
    TensorD a = uniform(Shape{2, 2, 3, 3}, rng, -1, 1);
    TensorD b = uniform(Shape{2, 3, 3, 3}, rng, -1, 1);
    l = {{"a", a}, {"b", b}};
    return std::function<TensorD()>([=] { return concat(std::vector<TensorD>{a, b, a}); });
  });

  auto conv = [](Conv2dOptions opts, bool bias) {
    return simple(0, [opts, bias](Rng& rng, Leaves& l) {
      TensorD x = uniform(Shape{2, 3, 7, 6}, rng, -1, 1);
      TensorD w = uniform(Shape{4, 3, 3, 3}, rng, -1, 1);
      TensorD b = bias ? uniform(Shape{1, 4, 1, 1}, rng, -1, 1) : TensorD();
      l = {{"x", x}, {"weight", w}};
      if (bias) l.emplace_back("bias", b);
      return std::function<TensorD()>([=] { return conv2d(x, w, b, opts); });
    });
  };
  r["conv2d"] = conv(Conv2dOptions{1, 1, 1}, true);
  r["conv2d_strided"] = conv(Conv2dOptions{2, 1, 1}, false);
  r["conv2d_dilated"] = conv(Conv2dOptions{1, 2, 2}, true);
  r["conv2d_pointwise"] = simple(0, [](Rng& rng, Leaves& l) {
    TensorD x = uniform(Shape{2, 5, 4, 4}, rng, -1, 1);
    TensorD w = uniform(Shape{3, 5, 1, 1}, rng, -1, 1);
    TensorD b = uniform(Shape{1, 3, 1, 1}, rng, -1, 1);
    l = {{"x", x}, {"weight", w}, {"bias", b}};
    return std::function<TensorD()>([=] { return conv2d(x, w, b); });
  });

  auto pool = [](auto op, Shape s) {
    return simple(0, [op, s](Rng& rng, Leaves& l) {
      TensorD x = uniform(s, rng, -1, 1);
      l = {{"x", x}};
      return std::function<TensorD()>([=] { return op(x); });
    });
  };
  r["avg_pool"] = pool([](const TensorD& x) { return avg_pool(x, 3); }, Shape{1, 2, 6, 7});
  r["avg_pool_sat"] = pool([](const TensorD& x) { return avg_pool_sat(x, 5); }, Shape{1, 2, 6, 7});
  r["sum_pool"] = pool([](const TensorD& x) { return sum_pool(x, 3); }, Shape{1, 2, 6, 7});
  r["adaptive_avg_pool"] = pool([](const TensorD& x) { return adaptive_avg_pool(x, 3); }, Shape{1, 2, 7, 8});
  r["adaptive_avg_pool_overlap"] = pool([](const TensorD& x) { return adaptive_avg_pool(x, 6); }, Shape{1, 2, 4, 5});
  r["max_pool"] = pool([](const TensorD& x) { return max_pool(x, 3, 2, 1); }, Shape{1, 2, 7, 8});
  r["avg_pool2x2"] = pool([](const TensorD& x) { return avg_pool2x2(x); }, Shape{1, 2, 6, 7});
  r["bilinear_resize_up"] = pool([](const TensorD& x) { return bilinear_resize(x, 9, 11); }, Shape{1, 2, 4, 5});
  r["bilinear_resize_down"] = pool([](const TensorD& x) { return bilinear_resize(x, 3, 4); }, Shape{1, 2, 7, 9});
  r["pixel_shuffle"] = pool([](const TensorD& x) { return pixel_shuffle(x); }, Shape{2, 8, 3, 4});
  r["pixel_unshuffle"] = pool([](const TensorD& x) { return pixel_unshuffle(x); }, Shape{2, 2, 6, 4});
  r["binomial_blur5"] = pool([](const TensorD& x) { return binomial_blur5(x); }, Shape{1, 2, 6, 7});

  r["dynamic_filter3x3"] = simple(0, [](Rng& rng, Leaves& l) {
    TensorD x = uniform(Shape{2, 6, 5, 4}, rng, -1, 1);
    TensorD k = uniform(Shape{2, 18, 5, 4}, rng, -1, 1);
    l = {{"x", x}, {"kernels", k}};
    return std::function<TensorD()>([=] { return dynamic_filter3x3(x, k, 2); });
  });

  auto bn = [](bool training) {
    return simple(0, [training](Rng& rng, Leaves& l) {
      TensorD x = uniform(Shape{3, 4, 3, 3}, rng, -1, 1);
      TensorD g = uniform(Shape{1, 4, 1, 1}, rng, 0.5, 1.5);
      TensorD b = uniform(Shape{1, 4, 1, 1}, rng, -1, 1);
      TensorD rm(Shape{1, 4, 1, 1}, 0.1), rv(Shape{1, 4, 1, 1}, 0.8);
      l = {{"x", x}, {"gamma", g}, {"beta", b}};
      return std::function<TensorD()>([=]() mutable { return batch_norm(x, g, b, rm, rv, training); });
    });
  };
  r["batch_norm_train"] = bn(true);
  r["batch_norm_eval"] = bn(false);

  auto nbp_entry = [](auto op) {
    return simple(0, [op](Rng& rng, Leaves& l) {
      TensorD f = uniform(Shape{2, 3, 9, 8}, rng, -1, 1);
      TensorD m = uniform(Shape{2, 1, 9, 8}, rng, 0, 1);
      for (double& v : m.mutable_data())
        if (v < 0.2) v = 0.0;
      l = {{"features", f}, {"mask", m}};
      return std::function<TensorD()>([=] { return op(f, m); });
    });
  };
  r["nbp"] = nbp_entry([](const TensorD& f, const TensorD& m) { return nbp(f, m, 5); });
  r["nbp_fast"] = nbp_entry([](const TensorD& f, const TensorD& m) { return nbp_fast(f, m, 7); });
  r["nbp_sum_pooled"] = nbp_entry([](const TensorD& f, const TensorD& m) { return nbp_sum_pooled(f, m, 3); });

  r["tmp_forward"] = simple(0, [](Rng& rng, Leaves& l) {
    TmpConfig cfg{16, 4, {5, 3, 3, 1}, 8};
    auto block = std::make_shared<TmpBlock<double>>(cfg, rng);
    TensorD x = uniform(Shape{2, 16, 8, 8}, rng, -1, 1);
    TensorD tri = random_one_hot(2, 32, 32, rng, 4);
    l = {{"features", x}};
    ParamList<double> p;
    block->collect("tmp", p);
    add_params(p, l);
    return std::function<TensorD()>([=] { return block->forward(x, tri, true); });
  });
  r["ppm_forward"] = simple(0, [](Rng& rng, Leaves& l) {
    TmpConfig cfg{16, 4, {5, 3, 3, 1}, 8};
    auto block = std::make_shared<PpmBlock<double>>(cfg, rng);
    TensorD x = uniform(Shape{2, 16, 7, 8}, rng, -1, 1);
    l = {{"features", x}};
    ParamList<double> p;
    block->collect("ppm", p);
    add_params(p, l);
    return std::function<TensorD()>([=] { return block->forward(x, true); });
  });

  auto glf = [](GlobalSource source, int part) {
    return simple(0, [source, part](Rng& rng, Leaves& l) {
      GlfConfig cfg{5, 8, 8, 4, 6, 7, source};
      auto block = std::make_shared<GlfBlock<double>>(cfg, rng);
      TensorD high = uniform(Shape{2, 8, 3, 4}, rng, -1, 1);
      TensorD low = uniform(Shape{2, 5, 6, 8}, rng, -1, 1);
      TensorD g = source == GlobalSource::None ? TensorD() : uniform(Shape{2, 7, 1, 1}, rng, -1, 1);
      TensorD xin = uniform(Shape{2, 8, 6, 8}, rng, -1, 1);
      TensorD kin = uniform(Shape{2, 18, 6, 8}, rng, -1, 1);
      ParamList<double> p;
      block->collect("glf", p);
      switch (part) {
        case 0:
          l = {{"x", xin}};
          if (g.defined()) l.emplace_back("global", g);
          add_params(p, l);
          return std::function<TensorD()>([=] { return block->generate_kernels(xin, g).values; });
        case 1:
          l = {{"x", xin}, {"kernels", kin}};
          return std::function<TensorD()>(
              [=] { return GlfBlock<double>::spatial_fusion(xin, KernelField<double>{kin, 2}); });
        default:
          l = {{"high", high}, {"low", low}};
          if (g.defined() && source != GlobalSource::HighFeaturePool) l.emplace_back("global", g);
          add_params(p, l);
          return std::function<TensorD()>([=] { return block->forward(high, low, g, true); });
      }
    });
  };
  r["glf_generate_kernels"] = glf(GlobalSource::TmpOutput, 0);
  r["glf_spatial_fusion"] = glf(GlobalSource::TmpOutput, 1);
  r["glf_forward"] = glf(GlobalSource::TmpOutput, 2);
  r["glf_forward_high_feature_pool"] = glf(GlobalSource::HighFeaturePool, 2);
  r["glf_forward_no_global"] = glf(GlobalSource::None, 2);
  r["static_fusion"] = simple(0, [](Rng& rng, Leaves& l) {
    auto block = std::make_shared<StaticFusionBlock<double>>(5, 8, 6, rng);
    TensorD high = uniform(Shape{2, 8, 3, 4}, rng, -1, 1);
    TensorD low = uniform(Shape{2, 5, 6, 8}, rng, -1, 1);
    l = {{"high", high}, {"low", low}};
    ParamList<double> p;
    block->collect("static", p);
    add_params(p, l);
    return std::function<TensorD()>([=] { return block->forward(high, low); });
  });

  auto loss_inputs = [](Rng& rng, int size) {
    struct In {
      TensorD pred, gt, fg, bg, image;
      BasicEvalRegion<double> region;
    } in;
    in.pred = uniform(Shape{2, 1, size, size}, rng, 0.05, 0.95);
    in.gt = uniform(Shape{2, 1, size, size}, rng, 0, 1);
    in.gt.set_requires_grad(false);
    in.fg = uniform(Shape{2, 3, size, size}, rng, 0, 1);
    in.bg = uniform(Shape{2, 3, size, size}, rng, 0, 1);
    in.image = uniform(Shape{2, 3, size, size}, rng, 0, 1);
    TensorD mask(Shape{2, 1, size, size});
    for (double& v : mask.mutable_data()) v = rng.coin(0.6) ? 1.0 : 0.0;
    in.region = BasicEvalRegion<double>::from_mask(mask);
    return in;
  };
  r["alpha_loss"] = simple(0, [loss_inputs](Rng& rng, Leaves& l) {
    auto in = loss_inputs(rng, 6);
    l = {{"pred", in.pred}};
    return std::function<TensorD()>([=] { return alpha_loss(in.pred, in.gt, in.region); });
  });
  r["composition_loss"] = simple(0, [loss_inputs](Rng& rng, Leaves& l) {
    auto in = loss_inputs(rng, 6);
    l = {{"pred", in.pred}, {"fg", in.fg}, {"bg", in.bg}};
    return std::function<TensorD()>([=] { return composition_loss(in.pred, in.fg, in.bg, in.image, in.region); });
  });
  r["laplacian_loss"] = simple(0, [loss_inputs](Rng& rng, Leaves& l) {
    auto in = loss_inputs(rng, 32);
    l = {{"pred", in.pred}};
    return std::function<TensorD()>([=] { return laplacian_loss(in.pred, in.gt); });
  });
  r["total_loss"] = simple(0, [loss_inputs](Rng& rng, Leaves& l) {
    auto in = loss_inputs(rng, 16);
    l = {{"pred", in.pred}};
    return std::function<TensorD()>(
        [=] { return total_loss(in.pred, in.gt, in.fg, in.bg, in.image, in.region).total; });
  });

  // PPM needs a 6x6 C5, so the baseline runs at 96 px.
  auto network = [](ArchConfig cfg, int size) {
    return simple(3, [cfg, size](Rng& rng, Leaves& l) {
      auto net = std::make_shared<Network<double>>(cfg, rng.next_u64());
      net->set_training(true);
      TensorD image = uniform(Shape{2, 3, size, size}, rng, 0, 1);
      TensorD tri = random_one_hot(2, size, size, rng, 8);
      l = {{"image", image}};
      add_params(net->named_tensors(), l);
      return std::function<TensorD()>([=] { return net->forward(image, tri); });
    });
  };
  r["toy_network"] = network(ArchConfig::toy_tmfnet(), 64);
  r["toy_baseline_network"] = network(ArchConfig::toy_tmfnet().baseline_twin(), 96);
  return r;
}

const Registry& registry() {
  static const Registry r = make_registry();
  return r;
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const std::function<TensorD()>& f, const Leaves& leaves,
                                const GradCheckOptions& options) {
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  TensorD out0;
  {
    NoGradGuard<double> guard;
    out0 = f();
  }
  std::vector<double> rv(out0.numel());
  for (double& v : rv) v = rng.normal();
  const TensorD proj(out0.shape(), rv);
  auto projected = [&] { return sum(mul(f(), proj)); };

  Leaves work = leaves;
  for (auto& [leaf_name, t] : work) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    TapeD tape;
    TapeScopeD scope(tape);
    tape.backward(projected());
  }
  std::vector<std::vector<double>> analytic;
  for (auto& [leaf_name, t] : work) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));
  }

  GradCheckResult result;
  result.name = name;
  const double h = options.step;
  for (std::size_t li = 0; li < work.size(); ++li) {
    TensorD& t = work[li].second;
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_probes_per_leaf > 0 && idx.size() > options.max_probes_per_leaf) {
      for (std::size_t i = 0; i < options.max_probes_per_leaf; ++i) {
        std::swap(idx[i], idx[i + rng.next_u64() % (idx.size() - i)]);
      }
      idx.resize(options.max_probes_per_leaf);
    }
    auto data = t.mutable_data();
    for (std::size_t i : idx) {
      const double x = data[i];
      double lp, lm;
      {
        NoGradGuard<double> guard;
        data[i] = x + h;
        lp = projected().item();
        data[i] = x - h;
        lm = projected().item();
        data[i] = x;
      }
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[li][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.min_magnitude});
      const double err = std::abs(a - numeric) / denom;
      ++result.probes;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        std::ostringstream os;
        os << work[li].first << "[" << i << "] analytic " << a << " numeric " << numeric;
        result.worst = os.str();
      }
    }
  }
  for (auto& [leaf_name, t] : work) t.zero_grad();
  result.passed = result.probes > 0 && result.max_rel_error <= options.tolerance;
  return result;
}

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& [name, entry] : registry()) names.push_back(name);
  return names;
}

bool has_gradcheck(const std::string& name) { return registry().count(name) > 0; }

GradCheckResult run_gradcheck(const std::string& name, const GradCheckOptions& options) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw std::out_of_range("no gradient check named '" + name + "'");
  GradCheckOptions o = options;
  if (o.max_probes_per_leaf == 0) o.max_probes_per_leaf = it->second.default_probes;
  return it->second.run(name, o);
}

std::vector<GradCheckResult> run_all_gradchecks(const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  for (const auto& name : gradcheck_names()) out.push_back(run_gradcheck(name, options));
  return out;
}

}  // namespace tmf
