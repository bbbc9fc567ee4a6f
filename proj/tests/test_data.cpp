#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "tmf/data.hpp"
#include "tmf/image_io.hpp"
#include "tmf/verify/oracles.hpp"

using namespace tmf;

namespace {

Image random_image(int c, int h, int w, Rng& rng) {
  Image img(c, h, w);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

AlphaMatte disc(int size, double radius) {
  AlphaMatte a(1, size, size);
  const double c = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) a.at(0, y, x) = std::hypot(y - c, x - c) <= radius ? 1.0f : 0.0f;
  return a;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Composite, PureAlphaReturnsLayersBitwise) {
  Rng rng(1);
  const Image f = random_image(3, 9, 7, rng), b = random_image(3, 9, 7, rng);
  EXPECT_EQ(composite(f, b, AlphaMatte(1, 9, 7, 1.0f)), f);
  EXPECT_EQ(composite(f, b, AlphaMatte(1, 9, 7, 0.0f)), b);
}

TEST(Composite, HalfAlpha) {
  const Image c = composite(Image(3, 2, 2, 1.0f), Image(3, 2, 2, 0.0f), AlphaMatte(1, 2, 2, 0.5f));
  for (float v : c.data()) EXPECT_EQ(v, 0.5f);
  EXPECT_THROW(composite(Image(3, 2, 2), Image(3, 2, 3), AlphaMatte(1, 2, 2)), std::invalid_argument);
}

TEST(Trimap, UnitKernelsOnBinaryAlphaGiveNoUnknown) {
  const Trimap t = gen_trimap(disc(21, 6), 1, 1);
  EXPECT_EQ(t.count(TrimapLabel::Unknown), 0u);
  EXPECT_GT(t.count(TrimapLabel::Foreground), 0u);
}

TEST(Trimap, OpaqueAlphaIsAllForeground) {
  const Trimap t = gen_trimap(AlphaMatte(1, 10, 12, 1.0f), 7, 7);
  EXPECT_EQ(t.count(TrimapLabel::Foreground), 120u);
}

TEST(Trimap, MatchesBruteForceMorphology) {
  Rng rng(2);
  for (int k : {2, 3, 5, 8, 15}) {
    EXPECT_EQ(gen_trimap(disc(41, 11), k, k), verify::trimap_reference(disc(41, 11), k, k)) << k;
  }
  const auto toy = synth_toy_foreground(5);
  for (int kd : {3, 9})
    for (int ke : {4, 11}) EXPECT_EQ(gen_trimap(toy.alpha, kd, ke), verify::trimap_reference(toy.alpha, kd, ke));
}

TEST(Trimap, MorphologyMatchesReferenceOnRandomMasks) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = rng.uniform_int(1, 30), w = rng.uniform_int(1, 30), k = rng.uniform_int(1, 12);
    std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w);
    for (auto& v : m) v = rng.coin(0.3);
    EXPECT_EQ(dilate_square(m, h, w, k), verify::dilate_reference(m, h, w, k));
    EXPECT_EQ(erode_square(m, h, w, k), verify::erode_reference(m, h, w, k));
  }
}

TEST(Trimap, SoundAndMonotone) {
  const auto toy = synth_toy_foreground(9);
  std::size_t previous = 0;
  for (int k = 1; k <= 15; k += 2) {
    const Trimap t = gen_trimap(toy.alpha, k, k);
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
      const float a = toy.alpha.data()[i];
      if (t.labels[i] == TrimapLabel::Foreground) EXPECT_GE(a, 1.0f - kPureDelta);
      if (t.labels[i] == TrimapLabel::Background) EXPECT_LE(a, kPureDelta);
    }
    EXPECT_GE(t.count(TrimapLabel::Unknown), previous);
    previous = t.count(TrimapLabel::Unknown);
  }
}

TEST(OneHot, ChannelsSumToOneAndRoundTrip) {
  Trimap t(3, 4);
  for (std::size_t i = 0; i < t.labels.size(); ++i) t.labels[i] = static_cast<TrimapLabel>(i % 3);
  const Tensor oh = one_hot_trimap(t);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(oh(0, 0, i / 4, i % 4) + oh(0, 1, i / 4, i % 4) + oh(0, 2, i / 4, i % 4), 1.0f);
  EXPECT_EQ(trimap_from_one_hot(oh), t);
  const Tensor unk = one_hot_trimap(Trimap(2, 2, TrimapLabel::Unknown));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(unk(0, 1, i / 2, i % 2), 1.0f);
}

TEST(Crop, FullSizeAllUnknownIsIdentity) {
  const MattingSample s = make_toy_sample(3, 0);
  MattingSample u = s;
  u.trimap = Trimap(s.trimap.height, s.trimap.width, TrimapLabel::Unknown);
  Rng rng(4);
  const MattingSample c = crop_unknown_centered(u, u.trimap.height, rng);
  EXPECT_EQ(c.composite, u.composite);
  EXPECT_EQ(c.alpha, u.alpha);
  EXPECT_EQ(c.trimap, u.trimap);
}

TEST(Crop, CentreIsUnknownWhenUnclamped) {
  const MattingSample s = make_toy_sample(3, 1);
  Rng rng(5);
  int unclamped = 0;
  for (int i = 0; i < 200; ++i) {
    const CropWindow w = choose_unknown_crop(s.trimap, 32, rng);
    ASSERT_GE(w.top, 0);
    ASSERT_GE(w.left, 0);
    ASSERT_LE(w.top + 32, s.trimap.height);
    ASSERT_LE(w.left + 32, s.trimap.width);
    const int cy = w.top + 16, cx = w.left + 16;
    const bool clamped = w.top == 0 || w.left == 0 || w.top + 32 == s.trimap.height || w.left + 32 == s.trimap.width;
    if (clamped) continue;
    ++unclamped;
    EXPECT_EQ(s.trimap.at(cy, cx), TrimapLabel::Unknown);
  }
  EXPECT_GT(unclamped, 0);
}

TEST(Crop, SeedDeterminesWindow) {
  const MattingSample s = make_toy_sample(3, 2);
  Rng a(6), b(6);
  for (int i = 0; i < 10; ++i) {
    const CropWindow wa = choose_unknown_crop(s.trimap, 48, a), wb = choose_unknown_crop(s.trimap, 48, b);
    EXPECT_EQ(wa.top, wb.top);
    EXPECT_EQ(wa.left, wb.left);
  }
}

TEST(Crop, DegenerateTrimapRejected) {
  MattingSample s = make_toy_sample(3, 3);
  s.trimap = Trimap(s.trimap.height, s.trimap.width, TrimapLabel::Foreground);
  Rng rng(7);
  EXPECT_THROW(crop_unknown_centered(s, 32, rng), DegenerateTrimapError);
}

TEST(Crop, OversizedCropReflectPadsFirst) {
  const MattingSample s = make_toy_sample(3, 4);
  Rng rng(8);
  const MattingSample c = crop_unknown_centered(s, s.trimap.height + 16, rng);
  EXPECT_EQ(c.trimap.height, s.trimap.height + 16);
  EXPECT_LE(composition_residual(c), 1e-6);
}

TEST(Flip, FlipTwiceIsIdentity) {
  const MattingSample s = make_toy_sample(3, 5);
  const MattingSample f = flip_sample(s);
  EXPECT_EQ(f.alpha.at(0, 10, 0), s.alpha.at(0, 10, s.alpha.width() - 1));
  const MattingSample back = flip_sample(f);
  EXPECT_EQ(back.alpha, s.alpha);
  EXPECT_EQ(back.composite, s.composite);
  EXPECT_EQ(back.trimap, s.trimap);
}

TEST(Padding, AlignedInputIsIdentity) {
  Rng rng(9);
  const Image img = random_image(3, 32, 48, rng);
  const PaddedInput p = pad_to_multiple(img, Trimap(32, 48), 16);
  EXPECT_EQ(p.image, img);
  EXPECT_EQ(unpad(AlphaMatte(1, 32, 48, 0.3f), p), AlphaMatte(1, 32, 48, 0.3f));
}

TEST(Padding, SeventyPadsToEighty) {
  Rng rng(10);
  const Image img = random_image(3, 70, 70, rng);
  const PaddedInput p = pad_to_multiple(img, Trimap(70, 70), 16);
  EXPECT_EQ(p.image.height(), 80);
  EXPECT_EQ(p.image.width(), 80);
  EXPECT_EQ(p.trimap.height, 80);
  EXPECT_EQ(p.image.at(1, 70, 5), img.at(1, 68, 5));
  EXPECT_EQ(p.image.at(2, 3, 79), img.at(2, 3, 59));
  AlphaMatte pred(1, 80, 80);
  for (int y = 0; y < 80; ++y)
    for (int x = 0; x < 80; ++x) pred.at(0, y, x) = p.image.at(0, y, x);
  const AlphaMatte back = unpad(pred, p);
  EXPECT_EQ(back.height(), 70);
  EXPECT_EQ(back.width(), 70);
  for (int y = 0; y < 70; ++y)
    for (int x = 0; x < 70; ++x) EXPECT_EQ(back.at(0, y, x), img.at(0, y, x));
}

TEST(ToyData, AlphaRangeWithPureRegions) {
  const auto fgs = synth_toy_foregrounds(12, 77);
  bool saw_distractor = false;
  for (const auto& f : fgs) {
    bool zero = false, one = false, soft = false;
    for (float a : f.alpha.data()) {
      ASSERT_GE(a, 0.0f);
      ASSERT_LE(a, 1.0f);
      zero |= a == 0.0f;
      one |= a == 1.0f;
      soft |= a > 0.0f && a < 1.0f;
    }
    EXPECT_TRUE(zero && one && soft) << to_string(f.shape);
    saw_distractor |= f.has_distractor;
    if (f.has_distractor) {
      for (std::size_t i = 0; i < f.alpha.data().size(); ++i)
        if (f.alpha.data()[i] > kPureDelta) EXPECT_EQ(f.distractor_alpha.data()[i], 0.0f);
    }
  }
  EXPECT_TRUE(saw_distractor);
}

TEST(ToyData, AllShapesAppear) {
  const auto fgs = synth_toy_foregrounds(30, 5);
  std::set<ToyShape> shapes;
  for (const auto& f : fgs) shapes.insert(f.shape);
  EXPECT_EQ(shapes.size(), 3u);
}

TEST(ToyData, SeedIsBitwiseReproducible) {
  const auto a = make_toy_dataset(4, 123), b = make_toy_dataset(4, 123), c = make_toy_dataset(4, 124);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].composite, b[i].composite);
    EXPECT_EQ(a[i].trimap, b[i].trimap);
  }
  EXPECT_NE(a[0].composite, c[0].composite);
}

TEST(ToyData, EveryAlphaGivesUnknownBandForKernelsFromThree) {
  const auto fgs = synth_toy_foregrounds(20, 31);
  for (const auto& f : fgs)
    for (int k : {3, 8, 15}) EXPECT_GT(gen_trimap(f.alpha, k, k).count(TrimapLabel::Unknown), 0u);
}

TEST(ToyData, SamplesSatisfyCompositingEquation) {
  for (const auto& s : make_toy_dataset(10, 99)) EXPECT_LE(composition_residual(s), 1e-6);
}

TEST(ImageIo, EightBitRoundTripIsExact) {
  const auto dir = scratch_dir("tmf_png_8");
  Rng rng(11);
  RawPng png{17, 13, 3, 8, {}};
  for (int i = 0; i < 17 * 13 * 3; ++i) png.samples.push_back(static_cast<std::uint16_t>(rng.uniform_int(0, 255)));
  write_png_raw((dir / "raw.png").string(), png);
  EXPECT_EQ(read_png_raw((dir / "raw.png").string()).samples, png.samples);
  const Image img = read_image((dir / "raw.png").string());
  write_image((dir / "rgb.png").string(), img, 8);
  EXPECT_EQ(read_png_raw((dir / "rgb.png").string()).samples, png.samples);
  EXPECT_EQ(read_image((dir / "rgb.png").string()), img);
  std::filesystem::remove_all(dir);
}

TEST(ImageIo, SixteenBitKeepsFineSteps) {
  const auto dir = scratch_dir("tmf_png_16");
  AlphaMatte a(1, 2, 3);
  a.data() = {0.0f, 1.0f / 65535, 2.0f / 65535, 0.5f, 65534.0f / 65535, 1.0f};
  write_image((dir / "a.png").string(), a, 16);
  const RawPng raw = read_png_raw((dir / "a.png").string());
  EXPECT_EQ(raw.bit_depth, 16);
  EXPECT_EQ(raw.samples, (std::vector<std::uint16_t>{0, 1, 2, 32768, 65534, 65535}));
  const AlphaMatte back = read_image((dir / "a.png").string());
  EXPECT_NE(back.data()[1], back.data()[0]);
  EXPECT_NEAR(back.data()[1], 1.0 / 65535, 1e-9);
  std::filesystem::remove_all(dir);
}

TEST(ImageIo, CorruptFileNamesPath) {
  const auto dir = scratch_dir("tmf_png_bad");
  const auto path = (dir / "broken.png").string();
  std::ofstream(path) << "definitely not a png";
  try {
    (void)read_image(path);
    FAIL() << "expected ImageIoError";
  } catch (const ImageIoError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos);
  }
  EXPECT_THROW(read_image((dir / "missing.png").string()), ImageIoError);
  std::filesystem::remove_all(dir);
}

TEST(ImageIo, TrimapRoundTrip) {
  const auto dir = scratch_dir("tmf_png_trimap");
  const Trimap t = make_toy_sample(8, 0).trimap;
  write_trimap((dir / "t.png").string(), t);
  EXPECT_EQ(read_trimap((dir / "t.png").string()), t);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, WriteThenLoadRoundTrip) {
  const auto dir = scratch_dir("tmf_dataset");
  const auto samples = make_toy_dataset(3, 42);
  const auto manifest = write_dataset(dir.string(), samples, 42, {"train", "train", "test"});
  ASSERT_EQ(manifest.entries.size(), 3u);
  for (const auto& e : manifest.entries) {
    EXPECT_TRUE(std::filesystem::exists(dir / e.fg_path));
    EXPECT_TRUE(std::filesystem::exists(dir / e.alpha_path));
    EXPECT_TRUE(std::filesystem::exists(dir / e.composite_path));
  }
  const auto back = read_manifest(dir.string());
  EXPECT_EQ(back.to_json(), manifest.to_json());
  const auto test_split = load_dataset(dir.string(), "test");
  ASSERT_EQ(test_split.size(), 1u);
  EXPECT_EQ(test_split[0].trimap, samples[2].trimap);
  EXPECT_LE(composition_residual(test_split[0]), 1e-6);
  for (std::size_t i = 0; i < samples[2].alpha.data().size(); ++i)
    EXPECT_NEAR(test_split[0].alpha.data()[i], samples[2].alpha.data()[i], 0.5 / 65535 + 1e-7);
  EXPECT_EQ(load_dataset(dir.string()).size(), 3u);
  std::filesystem::remove_all(dir);
}
