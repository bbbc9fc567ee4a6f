#include <gtest/gtest.h>

#include <filesystem>

#include "test_support.hpp"
#include "tmf/image_io.hpp"
#include "tmf/matting_ops.hpp"
#include "tmf/verify/oracles.hpp"

using namespace tmf;
using tmf::test::bitwise_equal;
using tmf::test::max_abs_diff;
using tmf::test::random_tensor;

namespace {

Tensor binary_mask(Shape s, Rng& rng, double p_on = 0.6) {
  std::vector<float> v(s.numel());
  for (auto& x : v) x = rng.coin(p_on) ? 1.0f : 0.0f;
  return Tensor(s, std::move(v));
}

KernelField<float> delta_kernels(int n, int groups, int h, int w) {
  Tensor k(Shape{n, groups * 9, h, w}, 0.0f);
  auto d = k.mutable_data();
  for (int b = 0; b < n; ++b)
    for (int g = 0; g < groups; ++g)
      for (int i = 0; i < h * w; ++i) d[k.index(b, g * 9 + 4, 0, 0) + i] = 1.0f;
  return KernelField<float>{k, groups};
}

GlfConfig small_glf(GlobalSource source = GlobalSource::TmpOutput) {
  GlfConfig c;
  c.low_channels = 5;
  c.high_channels = 8;
  c.internal_channels = 12;
  c.group_width = 4;
  c.out_channels = 6;
  c.global_channels = 7;
  c.global_source = source;
  return c;
}

}  // namespace

TEST(NonBackgroundMask, ConstantTrimaps) {
  const Tensor ones = non_background_mask<float>(Trimap(4, 5, TrimapLabel::Foreground), 7, 3);
  for (float v : ones.data()) EXPECT_EQ(v, 1.0f);
  const Tensor zeros = non_background_mask<float>(Trimap(4, 5, TrimapLabel::Background), 2, 9);
  for (float v : zeros.data()) EXPECT_EQ(v, 0.0f);
}

TEST(NonBackgroundMask, HalfTrimapMatchesBilinearOracle) {
  Trimap t(2, 2, TrimapLabel::Background);
  t.at(0, 1) = TrimapLabel::Foreground;
  t.at(1, 1) = TrimapLabel::Unknown;
  const Tensor m = non_background_mask<float>(t, 4, 4);
  const Tensor binary(Shape{1, 1, 2, 2}, std::vector<float>{0, 1, 0, 1});
  EXPECT_LT(max_abs_diff(m, verify::bilinear_reference(binary, 4, 4)), 1e-7);
}

TEST(Nbp, WorkedExample) {
  const Tensor f(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor m(Shape{1, 1, 2, 2}, std::vector<float>{1, 0, 1, 1});
  const double expected = (8.0 / 9.0) / (3.0 / 9.0 + 1e-6);
  EXPECT_NEAR(nbp(f, m, 3)(0, 0, 0, 0), expected, 1e-5);
  EXPECT_NEAR(nbp_fast(f, m, 3)(0, 0, 0, 0), expected, 1e-5);
  EXPECT_NEAR(expected, 8.0 / 3.0, 1e-4);
}

TEST(Nbp, MaskOfOnesReturnsConstant) {
  const Tensor f(Shape{1, 2, 9, 9}, 0.7f);
  const Tensor m(Shape{1, 1, 9, 9}, 1.0f);
  for (int k : {3, 5, 9}) {
    const Tensor a = nbp(f, m, k), b = nbp_fast(f, m, k);
    for (float v : a.data()) EXPECT_NEAR(v, 0.7f, 1e-4);
    for (float v : b.data()) EXPECT_NEAR(v, 0.7f, 1e-4);
  }
}

TEST(Nbp, MaskOfZerosReturnsZero) {
  Rng rng(1);
  const Tensor f = random_tensor(Shape{2, 3, 8, 8}, rng, -5, 5);
  const Tensor m(Shape{2, 1, 8, 8}, 0.0f);
  const Tensor a = nbp(f, m, 5), b = nbp_fast(f, m, 5);
  for (float v : a.data()) EXPECT_EQ(v, 0.0f);
  for (float v : b.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Nbp, FastPathIsExactlyZeroWithoutSupport) {
  Rng rng(21);
  const TensorD f = random_tensor<double>(Shape{1, 2, 20, 20}, rng, -300, 300);
  // Support along the top rows and left columns; the bottom-right block is empty.
  std::vector<double> mv(400, 0.0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      if (y < 6 || x < 6) mv[y * 20 + x] = rng.uniform(0.01, 1.0);
  const TensorD m(Shape{1, 1, 20, 20}, mv);
  const TensorD a = nbp_fast(f, m, 5), b = nbp(f, m, 5);
  for (int c = 0; c < 2; ++c)
    for (int y = 9; y < 20; ++y)
      for (int x = 9; x < 20; ++x) {
        EXPECT_EQ(a(0, c, y, x), 0.0) << y << "," << x;
        EXPECT_EQ(b(0, c, y, x), 0.0);
      }
}

TEST(Nbp, MaskedPixelsNeverInfluenceOutputBitwise) {
  Rng rng(2);
  const Shape s{2, 3, 13, 11};
  const Tensor m = binary_mask(Shape{2, 1, 13, 11}, rng);
  const Tensor f = random_tensor(s, rng);
  Tensor g = f.detach();
  auto gd = g.mutable_data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          if (m(n, 0, y, x) == 0.0f) gd[g.index(n, c, y, x)] = static_cast<float>(rng.uniform(-100, 100));
  for (int k : {3, 5, 11}) {
    EXPECT_TRUE(bitwise_equal(nbp(f, m, k), nbp(g, m, k))) << k;
    EXPECT_TRUE(bitwise_equal(nbp_fast(f, m, k), nbp_fast(g, m, k))) << k;
  }
}

TEST(Nbp, DivisorCancellation) {
  Rng rng(3);
  for (int k : {3, 11, 31}) {
    const Tensor f = random_tensor(Shape{1, 2, 40, 37}, rng);
    const Tensor m = random_tensor(Shape{1, 1, 40, 37}, rng, 0.0, 1.0);
    EXPECT_LE(max_abs_diff(nbp(f, m, k), nbp_sum_pooled(f, m, k)), 1e-6) << k;
  }
}

TEST(Nbp, Locality) {
  Rng rng(4);
  const int k = 5, r = k / 2;
  const Tensor f = random_tensor(Shape{1, 1, 15, 15}, rng);
  const Tensor m = random_tensor(Shape{1, 1, 15, 15}, rng, 0.0, 1.0);
  const Tensor base = nbp(f, m, k);
  Tensor f2 = f.detach(), m2 = m.detach();
  const int py = 7, px = 7;
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 15; ++x)
      if (std::abs(y - py) > r || std::abs(x - px) > r) {
        f2.mutable_data()[f2.index(0, 0, y, x)] += 3.0f;
        m2.mutable_data()[m2.index(0, 0, y, x)] = 0.5f;
      }
  EXPECT_EQ(nbp(f2, m2, k)(0, 0, py, px), base(0, 0, py, px));
}

TEST(Nbp, FastPathMatchesReference) {
  Rng rng(5);
  for (int k : {3, 5, 11, 17, 31}) {
    const Tensor f = random_tensor(Shape{2, 3, 33, 41}, rng);
    const Tensor m = binary_mask(Shape{2, 1, 33, 41}, rng);
    const auto ref = verify::nbp_reference(f, m, k, 1e-6);
    EXPECT_LE(max_abs_diff(nbp_fast(f, m, k), ref), 1e-5) << k;
    EXPECT_LE(max_abs_diff(nbp(f, m, k), ref), 1e-5) << k;
  }
}

TEST(Nbp, UnitKernelIsPointwise) {
  Rng rng(6);
  const Tensor f = random_tensor(Shape{1, 2, 5, 6}, rng);
  const Tensor m = binary_mask(Shape{1, 1, 5, 6}, rng);
  const Tensor y = nbp_fast(f, m, 1);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 30; ++i) {
      const float mv = m(0, 0, i / 6, i % 6);
      EXPECT_NEAR(y(0, c, i / 6, i % 6), f(0, c, i / 6, i % 6) * mv / (mv + 1e-6f), 1e-6);
    }
}

TEST(Nbp, RejectsBadInputs) {
  EXPECT_THROW(nbp(Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{1, 1, 4, 5}), 3), ShapeError);
  EXPECT_THROW(nbp(Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{1, 1, 4, 4}), 2), std::invalid_argument);
}

TEST(PoolKernel, ClampsToLargestOddExtent) {
  EXPECT_EQ(clamp_pool_kernel(31, 64, 64), 31);
  EXPECT_EQ(clamp_pool_kernel(31, 8, 10), 7);
  EXPECT_EQ(clamp_pool_kernel(5, 5, 9), 5);
  EXPECT_EQ(clamp_pool_kernel(7, 4, 4), 3);
}

TEST(Tmp, BranchesMatchNbpOracle) {
  Rng rng(7);
  TmpConfig cfg{16, 4, {7, 5, 3, 1}, 8};
  TmpBlock<float> tmp(cfg, rng);
  const Tensor f = random_tensor(Shape{2, 16, 9, 9}, rng);
  Trimap t(36, 36, TrimapLabel::Background);
  for (int y = 8; y < 30; ++y)
    for (int x = 4; x < 25; ++x) t.at(y, x) = (x + y) % 5 ? TrimapLabel::Foreground : TrimapLabel::Unknown;
  const Tensor onehot = stack_batch({one_hot_trimap(t), one_hot_trimap(Trimap(36, 36, TrimapLabel::Unknown))});
  TmpBlock<float>::Trace trace;
  const Tensor out = tmp.forward(f, onehot, true, &trace);
  EXPECT_EQ(out.shape(), (Shape{2, 8, 9, 9}));
  ASSERT_EQ(trace.pooled.size(), 4u);
  for (int b = 0; b < 4; ++b) {
    EXPECT_LE(max_abs_diff(trace.pooled[b], verify::nbp_reference(trace.reduced[b], trace.mask, trace.kernels[b], 1e-6)),
              1e-5);
  }
}

TEST(Tmp, ParamCountEqualsPpm) {
  for (TmpConfig cfg : {TmpConfig{2048, 0, {31, 17, 11, 5}, 256}, TmpConfig{128, 0, {7, 5, 3, 1}, 64},
                        TmpConfig{40, 6, {5, 3, 3, 1}, 12}}) {
    Rng a(1), b(1);
    EXPECT_EQ(TmpBlock<float>(cfg, a).param_count(), PpmBlock<float>(cfg, b).param_count());
  }
}

TEST(Tmp, RejectsEvenKernel) {
  Rng rng(8);
  EXPECT_THROW(TmpBlock<float>(TmpConfig{8, 2, {3, 4, 5, 1}, 4}, rng), std::invalid_argument);
}

TEST(Ppm, BinOneBranchEqualsGlobalPool) {
  Rng rng(9);
  PpmBlock<float> ppm(TmpConfig{8, 2, {1, 1, 1, 1}, 4}, rng);
  const Tensor f = random_tensor(Shape{1, 8, 7, 7}, rng);
  const Tensor pooled = ppm.branch_pooled(f, 0);
  const Tensor expect = ppm.branches()[0](global_avg_pool(f));
  EXPECT_LT(max_abs_diff(pooled, expect), 1e-6);
  EXPECT_EQ(ppm.forward(f, false).shape(), (Shape{1, 4, 7, 7}));
}

TEST(Ppm, RejectsFeaturesSmallerThanLargestBin) {
  Rng rng(10);
  PpmBlock<float> ppm(TmpConfig{8, 2, {1, 1, 1, 1}, 4}, rng);
  EXPECT_THROW(ppm.forward(Tensor(Shape{1, 8, 5, 6}), false), ShapeError);
}

TEST(PixelShuffle, FourValuesFormTwoByTwo) {
  const Tensor y = pixel_shuffle(Tensor(Shape{1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{1, 2, 3, 4}));
}

TEST(PixelShuffle, EnergyPreserved) {
  Rng rng(11);
  const Tensor x = random_tensor(Shape{2, 8, 3, 4}, rng);
  EXPECT_NEAR(sum(square(pixel_shuffle(x))).item(), sum(square(x)).item(), 1e-4);
}

TEST(GlfFusion, DeltaKernelsAreIdentity) {
  Rng rng(12);
  for (int n : {1, 2, 4}) {
    const Tensor x = random_tensor(Shape{n, 12, 6, 7}, rng);
    EXPECT_TRUE(bitwise_equal(GlfBlock<float>::spatial_fusion(x, delta_kernels(n, 3, 6, 7)), x));
  }
}

TEST(GlfFusion, ConstantGroupInteriorIsKernelSum) {
  Rng rng(13);
  const Tensor x(Shape{1, 4, 5, 5}, 2.0f);
  const Tensor k = random_tensor(Shape{1, 18, 5, 5}, rng);
  const Tensor y = GlfBlock<float>::spatial_fusion(x, KernelField<float>{k, 2});
  for (int g = 0; g < 2; ++g) {
    float s = 0.0f;
    for (int t = 0; t < 9; ++t) s += k(0, g * 9 + t, 2, 2);
    // channels are assigned to groups round-robin
    EXPECT_NEAR(y(0, g, 2, 2), 2.0f * s, 1e-5);
    EXPECT_NEAR(y(0, g + 2, 2, 2), 2.0f * s, 1e-5);
  }
}

TEST(GlfFusion, MatchesNestedLoopOracle) {
  Rng rng(14);
  const Tensor x = random_tensor(Shape{1, 4, 5, 5}, rng);
  const Tensor k = random_tensor(Shape{1, 18, 5, 5}, rng);
  EXPECT_LE(max_abs_diff(GlfBlock<float>::spatial_fusion(x, KernelField<float>{k, 2}),
                         verify::dynamic_filter_reference(x, k, 2)),
            1e-5);
}

TEST(GlfFusion, GroupIsolation) {
  Rng rng(15);
  const int groups = 3;
  const Tensor x = random_tensor(Shape{2, 6, 5, 6}, rng);
  const Tensor k = random_tensor(Shape{2, groups * 9, 5, 6}, rng);
  const Tensor base = GlfBlock<float>::spatial_fusion(x, KernelField<float>{k, groups});
  for (int g = 0; g < groups; ++g) {
    Tensor k2 = k.detach();
    for (int t = 0; t < 9; ++t)
      for (int i = 0; i < 30; ++i) k2.mutable_data()[k2.index(1, g * 9 + t, 0, 0) + i] += 0.5f;
    const Tensor y = GlfBlock<float>::spatial_fusion(x, KernelField<float>{k2, groups});
    for (int c = 0; c < 6; ++c) {
      bool changed = false;
      for (int i = 0; i < 30; ++i) changed |= y(1, c, i / 6, i % 6) != base(1, c, i / 6, i % 6);
      EXPECT_EQ(changed, c % groups == g) << "group " << g << " channel " << c;
      for (int i = 0; i < 30; ++i) EXPECT_EQ(y(0, c, i / 6, i % 6), base(0, c, i / 6, i % 6));
    }
  }
}

TEST(GlfFusion, RejectsGroupMismatch) {
  EXPECT_THROW(GlfBlock<float>::spatial_fusion(Tensor(Shape{1, 6, 4, 4}), KernelField<float>{Tensor(Shape{1, 36, 4, 4}), 4}),
               ShapeError);
}

TEST(Glf, DistributeMatchesCompositionOfOracles) {
  Rng rng(16);
  GlfBlock<float> glf(small_glf(), rng);
  const Tensor high = random_tensor(Shape{2, 8, 3, 4}, rng);
  const Tensor low = random_tensor(Shape{2, 5, 6, 8}, rng);
  const Tensor x = glf.distribute(high, low);
  EXPECT_EQ(x.shape(), (Shape{2, 12, 6, 8}));
  const Tensor shuffled = test::from_values(Shape{2, 2, 6, 8}, verify::pixel_shuffle_reference(high));
  const Tensor joined = concat(std::vector<Tensor>{shuffled, low});
  const auto ref = verify::conv2d_reference(joined, glf.distribute_conv().weight(), glf.distribute_conv().bias(), 1, 0, 1);
  EXPECT_LT(max_abs_diff(x, ref), 1e-5);
}

TEST(Glf, DistributeWithZeroInputsGivesBias) {
  Rng rng(17);
  GlfBlock<float> glf(small_glf(), rng);
  auto b = glf.distribute_conv().bias().mutable_data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.1f * static_cast<float>(i);
  const Tensor x = glf.distribute(Tensor(Shape{1, 8, 2, 2}), Tensor(Shape{1, 5, 4, 4}));
  for (int c = 0; c < 12; ++c)
    for (int i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(x(0, c, i / 4, i % 4), 0.1f * c);
}

TEST(Glf, DistributeRejectsBadRatio) {
  Rng rng(18);
  GlfBlock<float> glf(small_glf(), rng);
  EXPECT_THROW(glf.distribute(Tensor(Shape{1, 8, 3, 3}), Tensor(Shape{1, 5, 4, 4})), ShapeError);
}

TEST(Glf, KernelsMatchDirectEvaluation) {
  Rng rng(19);
  GlfBlock<float> glf(small_glf(), rng);
  const Tensor x = random_tensor(Shape{2, 12, 5, 6}, rng);
  const Tensor g = random_tensor(Shape{2, 7, 1, 1}, rng);
  const KernelField<float> k = glf.generate_kernels(x, g);
  EXPECT_EQ(k.groups, 3);
  EXPECT_EQ(k.values.shape(), (Shape{2, 27, 5, 6}));

  const auto local = verify::conv2d_reference(x, glf.local_conv().weight(), glf.local_conv().bias(), 1, 0, 1);
  const auto global = verify::conv2d_reference(g, glf.global_conv().weight(), glf.global_conv().bias(), 1, 0, 1);
  std::vector<double> pre(local.size());
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 12; ++c)
      for (int i = 0; i < 30; ++i) {
        const std::size_t at = (static_cast<std::size_t>(n) * 12 + c) * 30 + i;
        const double v = local[at] + global[n * 12 + c];
        pre[at] = v > 0 ? v : 0.01 * v;
      }
  const auto ref = verify::conv2d_reference(test::from_values(Shape{2, 12, 5, 6}, pre), glf.kernel_conv().weight(),
                                            glf.kernel_conv().bias(), 1, 1, 1);
  EXPECT_LT(max_abs_diff(k.values, ref), 1e-4);
}

TEST(Glf, ZeroGlobalWeightsNullGlobalContribution) {
  Rng rng(20);
  GlfBlock<float> glf(small_glf(), rng);
  for (auto& v : glf.global_conv().weight().mutable_data()) v = 0.0f;
  const Tensor x = random_tensor(Shape{1, 12, 4, 4}, rng);
  const auto a = glf.generate_kernels(x, Tensor(Shape{1, 7, 1, 1}, 0.0f));
  const auto b = glf.generate_kernels(x, Tensor(Shape{1, 7, 1, 1}, 1.0f));
  EXPECT_TRUE(bitwise_equal(a.values, b.values));
}

TEST(Glf, ConstantInputGivesConstantInteriorKernels) {
  Rng rng(21);
  GlfBlock<float> glf(small_glf(), rng);
  const Tensor x(Shape{1, 12, 6, 6}, 0.3f);
  const Tensor g = random_tensor(Shape{1, 7, 1, 1}, rng);
  const auto k = glf.generate_kernels(x, g);
  for (int c = 0; c < 27; ++c)
    for (int y = 1; y < 5; ++y)
      for (int xx = 1; xx < 5; ++xx) EXPECT_NEAR(k.values(0, c, y, xx), k.values(0, c, 1, 1), 1e-6);
}

TEST(Glf, WrongGlobalChannelsRejected) {
  Rng rng(22);
  GlfBlock<float> glf(small_glf(), rng);
  EXPECT_THROW(glf.generate_kernels(Tensor(Shape{1, 12, 4, 4}), Tensor(Shape{1, 6, 1, 1})), ShapeError);
}

TEST(Glf, NoGlobalSourceOmitsBranch) {
  Rng a(23), b(23);
  GlfBlock<float> with(small_glf(), a);
  GlfBlock<float> without(small_glf(GlobalSource::None), b);
  EXPECT_EQ(with.param_count() - without.param_count(), 7u * 12 + 12);
  const Tensor out = without.forward(Tensor(Shape{1, 8, 2, 2}, 0.5f), Tensor(Shape{1, 5, 4, 4}, 0.2f), Tensor(), false);
  EXPECT_EQ(out.shape(), (Shape{1, 6, 4, 4}));
}

TEST(Glf, ForwardEqualsComponentChain) {
  Rng rng(24);
  GlfBlock<float> glf(small_glf(), rng);
  const Tensor high = random_tensor(Shape{2, 8, 3, 3}, rng);
  const Tensor low = random_tensor(Shape{2, 5, 6, 6}, rng);
  const Tensor g = random_tensor(Shape{2, 7, 1, 1}, rng);
  KernelField<float> kernels;
  const Tensor z = glf.forward(high, low, g, false, &kernels);
  const Tensor x = glf.distribute(high, low);
  const auto k = glf.generate_kernels(x, g);
  EXPECT_TRUE(bitwise_equal(k.values, kernels.values));
  const Tensor y = test::from_values(x.shape(), verify::dynamic_filter_reference(x, k.values, k.groups));
  EXPECT_LT(max_abs_diff(z, glf.mix(y, false)), 1e-5);
}

TEST(Glf, ZeroWeightsGiveZeroOutput) {
  Rng rng(25);
  GlfBlock<float> glf(small_glf(), rng);
  for (Conv2dLayer<float>* c : {&glf.distribute_conv(), &glf.local_conv(), &glf.global_conv(), &glf.kernel_conv(),
                                &glf.mix_conv()}) {
    for (auto& v : c->weight().mutable_data()) v = 0.0f;
    if (c->has_bias())
      for (auto& v : c->bias().mutable_data()) v = 0.0f;
  }
  const Tensor z = glf.forward(random_tensor(Shape{1, 8, 2, 2}, rng), random_tensor(Shape{1, 5, 4, 4}, rng),
                               random_tensor(Shape{1, 7, 1, 1}, rng), false);
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Glf, HighFeaturePoolUsesHighChannels) {
  Rng rng(26);
  GlfBlock<float> glf(small_glf(GlobalSource::HighFeaturePool), rng);
  EXPECT_EQ(glf.global_conv().in_channels(), 8);
  const Tensor z = glf.forward(random_tensor(Shape{1, 8, 2, 2}, rng), random_tensor(Shape{1, 5, 4, 4}, rng), Tensor(), false);
  EXPECT_EQ(z.shape(), (Shape{1, 6, 4, 4}));
}

TEST(Glf, InvalidConfigsRejected) {
  Rng rng(27);
  GlfConfig c = small_glf();
  c.high_channels = 6;
  EXPECT_THROW(GlfBlock<float>(c, rng), std::invalid_argument);
  c = small_glf();
  c.internal_channels = 10;
  EXPECT_THROW(GlfBlock<float>(c, rng), std::invalid_argument);
}

TEST(Glf, FewerParamsThanStaticFusionAtF1) {
  Rng a(1), b(1);
  GlfConfig c;
  c.low_channels = 256;
  c.high_channels = 256;
  c.internal_channels = 256;
  c.out_channels = 256;
  c.global_channels = 256;
  const GlfBlock<float> glf(c, a);
  const StaticFusionBlock<float> fixed(256, 256, 256, b);
  EXPECT_LT(glf.param_count(), fixed.param_count());
}

TEST(StaticFusion, ZeroWeightsGiveLeakyBias) {
  Rng rng(28);
  StaticFusionBlock<float> sf(3, 4, 2, rng);
  for (auto& v : sf.conv().weight().mutable_data()) v = 0.0f;
  sf.conv().bias().mutable_data()[0] = 0.5f;
  sf.conv().bias().mutable_data()[1] = -2.0f;
  const Tensor y = sf.forward(Tensor(Shape{1, 4, 2, 2}, 1.0f), Tensor(Shape{1, 3, 4, 4}, 1.0f));
  for (int i = 0; i < 16; ++i) {
    EXPECT_FLOAT_EQ(y(0, 0, i / 4, i % 4), 0.5f);
    EXPECT_FLOAT_EQ(y(0, 1, i / 4, i % 4), -0.02f);
  }
}

TEST(StaticFusion, MatchesCompositionOfOracles) {
  Rng rng(29);
  StaticFusionBlock<float> sf(3, 4, 5, rng);
  for (auto& v : sf.conv().bias().mutable_data()) v = static_cast<float>(rng.uniform(-1, 1));
  const Tensor high = random_tensor(Shape{2, 4, 3, 4}, rng);
  const Tensor low = random_tensor(Shape{2, 3, 6, 8}, rng);
  const Tensor up = test::from_values(Shape{2, 4, 6, 8}, verify::bilinear_reference(high, 6, 8));
  auto ref = verify::conv2d_reference(concat(std::vector<Tensor>{up, low}), sf.conv().weight(), sf.conv().bias(), 1, 1, 1);
  for (auto& v : ref) v = v > 0 ? v : 0.01 * v;
  EXPECT_LT(max_abs_diff(sf.forward(high, low), ref), 1e-5);
}

TEST(StaticFusion, ZeroHighDependsOnlyOnLow) {
  Rng rng(30);
  StaticFusionBlock<float> sf(3, 4, 2, rng);
  const Tensor low = random_tensor(Shape{1, 3, 4, 4}, rng);
  Tensor w = sf.conv().weight();
  for (int o = 0; o < 2; ++o)
    for (int c = 0; c < 4; ++c)
      for (int t = 0; t < 9; ++t) w.mutable_data()[w.index(o, c, t / 3, t % 3)] = 9.0f;
  const Tensor a = sf.forward(Tensor(Shape{1, 4, 2, 2}, 0.0f), low);
  for (auto& v : w.mutable_data()) v = v == 9.0f ? -4.0f : v;
  EXPECT_TRUE(bitwise_equal(a, sf.forward(Tensor(Shape{1, 4, 2, 2}, 0.0f), low)));
}

TEST(KernelMaps, ExportNormalisesEachSlice) {
  const auto dir = std::filesystem::temp_directory_path() / "tmf_kernel_maps_test";
  std::filesystem::remove_all(dir);
  const auto delta = delta_kernels(1, 2, 4, 5);
  const auto files = export_kernel_maps(delta, dir.string());
  ASSERT_EQ(files.size(), 18u);
  for (const auto& f : files) {
    const RawPng png = read_png_raw(f.path);
    EXPECT_EQ(png.width, 5);
    EXPECT_EQ(png.height, 4);
    // Every slice of a delta field is constant, so it maps to mid-gray.
    for (auto v : png.samples) EXPECT_EQ(v, 128);
    EXPECT_EQ(f.min, f.max);
  }

  Rng rng(31);
  const Tensor k = random_tensor(Shape{1, 18, 4, 5}, rng);
  const auto ramp = export_kernel_maps(KernelField<float>{k, 2}, dir.string());
  for (const auto& f : ramp) {
    const RawPng png = read_png_raw(f.path);
    const int channel = f.group * 9 + (f.u + 1) * 3 + (f.v + 1);
    EXPECT_EQ(std::filesystem::path(f.path).filename().string(),
              "g" + std::to_string(f.group) + "_u" + std::to_string(f.u + 1) + "_v" + std::to_string(f.v + 1) + ".png");
    for (int i = 0; i < 20; ++i) {
      const double back = f.min + (f.max - f.min) * png.samples[i] / 255.0;
      EXPECT_NEAR(back, k(0, channel, i / 5, i % 5), (f.max - f.min) / 255.0);
    }
  }
  std::filesystem::remove_all(dir);
}
