#include "tmf/cost.hpp"

#include <stdexcept>

#include "json.hpp"

namespace tmf {
namespace {

struct Walker {
  std::uint64_t macs = 0;
  std::uint64_t conv_macs = 0;

  template <typename T>
  Shape conv(const Conv2dLayer<T>& layer, Shape in) {
    const auto& o = layer.options();
    Shape out{in.n, layer.out_channels(), conv_output_size(in.h, layer.kernel(), o.stride, o.padding, o.dilation),
              conv_output_size(in.w, layer.kernel(), o.stride, o.padding, o.dilation)};
    const std::uint64_t m = static_cast<std::uint64_t>(out.numel()) * layer.in_channels() * layer.kernel() *
                            layer.kernel();
    macs += m;
    conv_macs += m;
    return out;
  }
  void bn(Shape s) { macs += 2 * s.numel(); }
  void eltwise(Shape s) { macs += s.numel(); }
  void pool(Shape in) { macs += in.numel(); }
  void upsample(Shape out) { macs += out.numel(); }

  template <typename T>
  Shape cba(const ConvBnAct<T>& layer, Shape in) {
    Shape out = conv(layer.conv, in);
    bn(out);
    eltwise(out);
    return out;
  }
};

template <typename T>
Shape walk_encoder(const Encoder<T>& enc, Shape in, Walker& w, std::array<Shape, 5>& features) {
  if (enc.kind() == EncoderKind::Toy) {
    Shape h = in;
    for (int s = 0; s < 5; ++s) features[s] = h = w.cba(enc.toy_stages()[s], h);
    return h;
  }
  features[0] = w.cba(enc.stem(), in);
  w.pool(features[0]);
  Shape h{1, features[0].c, conv_output_size(features[0].h, 3, 2, 1), conv_output_size(features[0].w, 3, 2, 1)};
  for (int l = 0; l < 4; ++l) {
    for (const auto& b : enc.layers()[l]) {
      Shape y = w.cba(b.spatial, w.cba(b.reduce, h));
      y = w.conv(b.expand, y);
      w.bn(y);
      if (b.has_projection) w.bn(w.conv(b.projection, h));
      w.eltwise(y);
      w.eltwise(y);
      h = y;
    }
    features[l + 1] = h;
  }
  return h;
}

template <typename T>
Shape walk_context(const Network<T>& net, Shape c5, Walker& w) {
  const TmpConfig& cfg = net.config().tmp;
  const int reduce = cfg.branch_channels();
  Shape concat_shape = c5;
  concat_shape.c += 4 * reduce;
  if (net.config().context == ContextKind::Tmp) {
    const Shape mask{1, 1, c5.h, c5.w};
    w.upsample(mask);
    for (const auto& branch : net.tmp().branches()) {
      const Shape r = w.conv(branch, c5);
      w.eltwise(r);  // F * M
      w.pool(r);
      w.pool(mask);
      w.eltwise(mask);  // + eps
      w.eltwise(r);     // division
    }
    Shape h = w.cba(net.tmp().fuse1(), concat_shape);
    return w.cba(net.tmp().fuse2(), h);
  }
  for (int b = 0; b < 4; ++b) {
    w.pool(c5);
    w.conv(net.ppm().branches()[b], Shape{1, c5.c, kPpmBins[b], kPpmBins[b]});
    w.upsample(Shape{1, reduce, c5.h, c5.w});
  }
  Shape h = w.cba(net.ppm().fuse1(), concat_shape);
  return w.cba(net.ppm().fuse2(), h);
}

}  // namespace

bool CostReport::consistent() const {
  std::uint64_t p = 0, m = 0;
  for (const auto& r : rows) {
    p += r.params;
    m += r.macs;
  }
  return p == total_params && m == total_macs;
}

const CostRow& CostReport::row(const std::string& module) const {
  for (const auto& r : rows)
    if (r.module == module) return r;
  throw std::out_of_range("no cost row named '" + module + "'");
}

std::string CostReport::to_json() const {
  nlohmann::json j;
  j["input"] = {input_h, input_w};
  j["total_params"] = total_params;
  j["total_macs"] = total_macs;
  j["gflops"] = gflops();
  for (const auto& r : rows) {
    j["modules"].push_back({{"module", r.module}, {"params", r.params}, {"macs", r.macs}, {"conv_macs", r.conv_macs}});
  }
  return j.dump(2);
}

template <typename T>
CostReport count_params(const Network<T>& net) {
  CostReport report;
  for (const auto& [name, count] : net.module_param_counts()) {
    report.rows.push_back(CostRow{name, count, 0, 0});
    report.total_params += count;
  }
  return report;
}

template <typename T>
CostReport count_flops(const Network<T>& net, int input_h, int input_w) {
  if (input_h <= 0 || input_w <= 0 || input_h % 16 != 0 || input_w % 16 != 0) {
    throw std::invalid_argument("count_flops: input extent must be positive and divisible by 16");
  }
  CostReport report = count_params(net);
  report.input_h = input_h;
  report.input_w = input_w;
  const ArchConfig& cfg = net.config();
  std::array<Walker, 7> w{};
  const Shape input{1, 6, input_h, input_w};
  std::array<Shape, 5> feats;
  walk_encoder(net.encoder(), input, w[0], feats);
  Shape h = walk_context(net, feats[4], w[1]);
  const Shape g_shape{1, cfg.global_channels(), 1, 1};
  if (cfg.uses_global(GlobalSource::TmpOutput)) w[2].pool(h);
  if (cfg.uses_global(GlobalSource::C5Pool)) {
    w[2].pool(feats[4]);
    w[2].conv(net.c5_projection(), Shape{1, feats[4].c, 1, 1});
  }
  if (cfg.stages[0].kind == FusionKind::Glf) {
    h = Shape{1, h.c, h.h * 2, h.w * 2};
    w[3].upsample(h);
  }
  const std::array<Shape, 3> lows{feats[1], feats[0], input};
  for (int s = 0; s < 3; ++s) {
    Walker& ws = w[3 + s];
    const Shape low = lows[s];
    if (cfg.stages[s].kind == FusionKind::Glf) {
      const GlfBlock<T>& glf = net.glf(s);
      const Shape distributed{1, h.c / 4 + low.c, low.h, low.w};
      const Shape x = ws.conv(glf.distribute_conv(), distributed);
      const Shape pre = ws.conv(glf.local_conv(), x);
      const GlobalSource src = cfg.stages[s].global_source;
      if (src != GlobalSource::None) {
        Shape g = g_shape;
        if (src == GlobalSource::HighFeaturePool) {
          ws.pool(h);
          g = Shape{1, h.c, 1, 1};
        }
        ws.conv(glf.global_conv(), g);
        ws.eltwise(pre);
      }
      ws.eltwise(pre);
      ws.conv(glf.kernel_conv(), pre);
      ws.macs += static_cast<std::uint64_t>(x.numel()) * 9;
      h = ws.conv(glf.mix_conv(), x);
      ws.bn(h);
      ws.eltwise(h);
    } else {
      const StaticFusionBlock<T>& sf = net.static_fusion(s);
      ws.upsample(Shape{1, h.c, low.h, low.w});
      h = ws.conv(sf.conv(), Shape{1, h.c + low.c, low.h, low.w});
      ws.eltwise(h);
    }
  }
  Shape y = w[6].conv(net.head_hidden(), h);
  w[6].eltwise(y);
  y = w[6].conv(net.head_out(), y);
  w[6].eltwise(y);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    report.rows[i].macs = w[i].macs;
    report.rows[i].conv_macs = w[i].conv_macs;
    report.total_macs += w[i].macs;
  }
  return report;
}

template CostReport count_params<float>(const Network<float>&);
template CostReport count_params<double>(const Network<double>&);
template CostReport count_flops<float>(const Network<float>&, int, int);
template CostReport count_flops<double>(const Network<double>&, int, int);

}  // namespace tmf
