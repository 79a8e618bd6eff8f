#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "ctsynth/phantom.hpp"
#include "ctsynth/volume.hpp"
#include "ctsynth/volume_io.hpp"

using namespace ctsynth;

namespace {

Volume random_volume(int h, int w, int l, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(h) * w * l);
  for (auto& x : v) x = d(rng);
  return Volume(h, w, l, std::move(v));
}

Volume constant_volume(int h, int w, int l, float c) {
  return Volume(h, w, l, std::vector<float>(static_cast<std::size_t>(h) * w * l, c));
}

}  // namespace

TEST(Volume, ConstructionValidates) {
  EXPECT_THROW(Volume(0, 4, 4), Error);
  EXPECT_THROW(Volume(2, 2, 2, std::vector<float>(7)), Error);
  std::vector<float> bad(8, 0.5f);
  bad[3] = std::nanf("");
  EXPECT_THROW(Volume(2, 2, 2, bad), Error);
  VolumeMeta m;
  m.range = {1.0, 1.0};
  EXPECT_THROW(Volume(2, 2, 2, m), Error);
}

TEST(Volume, ValuesAreClampedToRange) {
  Volume v(1, 1, 2, std::vector<float>{-0.5f, 1.5f});
  EXPECT_EQ(v.at(0, 0, 0), 0.0f);
  EXPECT_EQ(v.at(0, 0, 1), 1.0f);
  v.set(0, 0, 0, 2.0f);
  EXPECT_EQ(v.at(0, 0, 0), 1.0f);
}

TEST(Volume, DecomposeShapes) {
  const Volume v = random_volume(5, 6, 7, 1);
  const auto ax = decompose(v, ViewAxis::axial);
  const auto co = decompose(v, ViewAxis::coronal);
  const auto sa = decompose(v, ViewAxis::sagittal);
  ASSERT_EQ(ax.size(), 7u);
  ASSERT_EQ(co.size(), 5u);
  ASSERT_EQ(sa.size(), 6u);
  EXPECT_EQ(ax[0].data.shape(), (Shape{5, 6}));
  EXPECT_EQ(co[0].data.shape(), (Shape{6, 7}));
  EXPECT_EQ(sa[0].data.shape(), (Shape{5, 7}));
  EXPECT_EQ(co[2].index, 3);
  EXPECT_EQ(co[2].data.at(4, 6), v.at(2, 4, 6));
  EXPECT_EQ(sa[1].data.at(3, 5), v.at(3, 1, 5));
}

TEST(Volume, DecomposeRestackRoundTrip) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Volume v = random_volume(4 + static_cast<int>(seed), 5, 3 + static_cast<int>(seed), seed);
    for (ViewAxis view : {ViewAxis::axial, ViewAxis::coronal, ViewAxis::sagittal}) {
      auto imgs = decompose(v, view);
      std::reverse(imgs.begin(), imgs.end());
      EXPECT_EQ(restack(imgs, v.meta()), v) << to_string(view);
    }
  }
}

TEST(Volume, RestackRejectsGapsAndMixedViews) {
  const Volume v = random_volume(3, 3, 3, 4);
  auto imgs = decompose(v, ViewAxis::axial);
  imgs[1].index = 5;
  EXPECT_THROW(restack(imgs), Error);
  auto mixed = decompose(v, ViewAxis::axial);
  mixed[0].view = ViewAxis::coronal;
  EXPECT_THROW(restack(mixed), Error);
}

TEST(Volume, LengthFormulas) {
  EXPECT_EQ(subsampled_length(33, 2), 17);
  EXPECT_EQ(subsampled_length(9, 4), 3);
  EXPECT_EQ(subsampled_length(10, 4), 3);
  for (int r = 2; r <= 4; ++r)
    for (int l = 2; l <= 16; ++l) EXPECT_EQ(upsampled_length(l, r), r * l - r + 1);
}

TEST(Volume, DirectSubsampleKeepsEveryRthSlice) {
  const Volume v = random_volume(4, 5, 11, 7);
  for (int r = 2; r <= 4; ++r) {
    DegradationSpec spec;
    spec.factor = r;
    const Volume lo = degrade(v, spec);
    ASSERT_EQ(lo.slices(), subsampled_length(11, r));
    for (int k = 0; k < lo.slices(); ++k)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) EXPECT_EQ(lo.at(y, x, k), v.at(y, x, k * r));
    EXPECT_DOUBLE_EQ(lo.spacing().sz, r * v.spacing().sz);
  }
  DegradationSpec spec;
  spec.factor = 4;
  EXPECT_THROW(degrade(random_volume(2, 2, 3, 1), spec), Error);
}

TEST(Volume, BlurNoiseIsSeededAndPreservesConstants) {
  DegradationSpec spec;
  spec.mode = DegradationMode::blur_noise;
  spec.noise_sigma = 0.0;
  const Volume flat = degrade(constant_volume(3, 3, 9, 0.4f), spec);
  for (float x : flat.voxels()) EXPECT_NEAR(x, 0.4f, 1e-6);

  spec.noise_sigma = 0.01;
  spec.seed = 5;
  const Volume v = random_volume(6, 6, 9, 2);
  EXPECT_EQ(degrade(v, spec), degrade(v, spec));
  spec.seed = 6;
  const Volume other = degrade(v, spec);
  spec.seed = 5;
  EXPECT_FALSE(degrade(v, spec) == other);
}

TEST(Fusion, BranchTable) {
  // r = 2: 0-based slice 0 is an original, slice 1 is synthesized
  const Volume a = constant_volume(1, 1, 3, 0.0f);
  const Volume c = constant_volume(1, 1, 3, 0.2f);
  const Volume s = constant_volume(1, 1, 3, 0.4f);
  const Volume f = fuse(a, c, s, 2);
  EXPECT_NEAR(f.at(0, 0, 0), 0.3f, 1e-7);  // (oc + os) / 2
  EXPECT_NEAR(f.at(0, 0, 1), 0.2f, 1e-7);  // (oa + oc + os) / 3
  EXPECT_NEAR(f.at(0, 0, 2), 0.3f, 1e-7);
  const Volume all = fuse(a, c, s, 2, true);
  EXPECT_NEAR(all.at(0, 0, 0), 0.2f, 1e-7);

  const Volume a2 = constant_volume(1, 1, 3, 0.3f);
  const Volume zero = constant_volume(1, 1, 3, 0.0f);
  EXPECT_NEAR(fuse(a2, zero, zero, 2).at(0, 0, 1), 0.1f, 1e-7);
}

TEST(Fusion, BranchExampleValues) {
  // values outside [0, 1] need a wider range
  VolumeMeta m;
  m.range = {0.0, 10.0};
  const Volume a(1, 1, 3, std::vector<float>{0, 3, 0}, m);
  const Volume c(1, 1, 3, std::vector<float>{2, 0, 2}, m);
  const Volume s(1, 1, 3, std::vector<float>{4, 0, 4}, m);
  const Volume f = fuse(a, c, s, 2);
  EXPECT_FLOAT_EQ(f.at(0, 0, 0), 3.0f);
  EXPECT_FLOAT_EQ(f.at(0, 0, 1), 1.0f);
}

TEST(Fusion, IdentityAndSymmetry) {
  const Volume v = random_volume(3, 4, 7, 9);
  EXPECT_EQ(fuse(v, v, v, 3), v);
  const Volume b = random_volume(3, 4, 7, 10), c = random_volume(3, 4, 7, 11);
  EXPECT_EQ(fuse(v, b, c, 3), fuse(v, c, b, 3));
  EXPECT_THROW(fuse(v, b, random_volume(3, 4, 5, 1), 3), Error);
  EXPECT_THROW(fuse(random_volume(2, 2, 6, 1), random_volume(2, 2, 6, 2), random_volume(2, 2, 6, 3), 2), Error);
}

TEST(VolumeIo, RoundTripIsBitExact) {
  VolumeMeta m;
  m.spacing = {0.7, 0.8, 2.5};
  m.range = {-1.0, 3.0};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> d(-1.0f, 3.0f);
  std::vector<float> vox(4 * 5 * 6);
  for (auto& x : vox) x = d(rng);
  const Volume v(4, 5, 6, vox, m);
  std::stringstream ss;
  write_volume(v, ss);
  const Volume back = read_volume(ss);
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.meta(), m);
}

TEST(VolumeIo, RejectsMalformedInput) {
  const Volume v = random_volume(2, 2, 3, 1);
  std::stringstream ss;
  write_volume(v, ss);
  const std::string good = ss.str();

  std::stringstream truncated(good.substr(0, good.size() - 4));
  EXPECT_THROW(read_volume(truncated), Error);

  std::string wrong_l = good;
  wrong_l.replace(wrong_l.find("\"l\":3"), 5, "\"l\":4");
  std::stringstream s1(wrong_l);
  EXPECT_THROW(read_volume(s1), Error);

  std::stringstream garbage("not json\n");
  EXPECT_THROW(read_volume(garbage), Error);

  std::string with_nan = good;
  const float nan = std::nanf("");
  std::memcpy(with_nan.data() + with_nan.size() - 4, &nan, 4);
  std::stringstream s2(with_nan);
  EXPECT_THROW(read_volume(s2), Error);

  std::stringstream trailing(good + "xx");
  EXPECT_THROW(read_volume(trailing), Error);
}

TEST(Phantom, DeterministicAndInRange) {
  for (auto kind : {PhantomKind::ellipsoids, PhantomKind::bandlimited_noise, PhantomKind::layered_sine}) {
    const Volume a = make_phantom(kind, 24, 20, 17, 7);
    const Volume b = make_phantom(kind, 24, 20, 17, 7);
    EXPECT_EQ(a, b) << to_string(kind);
    float lo = 1, hi = 0;
    for (float x : a.voxels()) lo = std::min(lo, x), hi = std::max(hi, x);
    EXPECT_GE(lo, 0.0f);
    EXPECT_LE(hi, 1.0f);
    EXPECT_LT(lo, hi) << "phantom should not be flat";
    EXPECT_FALSE(make_phantom(kind, 24, 20, 17, 8) == a);
  }
}

TEST(Phantom, ZeroAmplitudeLayeredSineIsConstant) {
  PhantomOptions opts;
  opts.amplitude = 0.0;
  const Volume v = make_phantom(PhantomKind::layered_sine, 10, 10, 9, 3, opts);
  for (float x : v.voxels()) EXPECT_EQ(x, v.voxels()[0]);
}

TEST(Phantom, ZProfileIsBandLimited) {
  // Energy of the z-DFT above 0.125 cycles/slice stays a tiny fraction of the
  // non-DC energy, so r <= 4 subsampling does not alias.
  for (auto kind : {PhantomKind::ellipsoids, PhantomKind::bandlimited_noise, PhantomKind::layered_sine}) {
    const int l = 64;
    const Volume v = make_phantom(kind, 16, 16, l, 11);
    double high = 0, total = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int k = 1; k <= l / 2; ++k) {
          double re = 0, im = 0;
          for (int z = 0; z < l; ++z) {
            const double w = 0.5 - 0.5 * std::cos(2 * M_PI * (z + 0.5) / l);  // Hann window
            re += w * v.at(y, x, z) * std::cos(2 * M_PI * k * z / l);
            im -= w * v.at(y, x, z) * std::sin(2 * M_PI * k * z / l);
          }
          const double e = re * re + im * im;
          total += e;
          if (static_cast<double>(k) / l > 0.15) high += e;
        }
    EXPECT_LT(high, 1e-3 * total) << to_string(kind);
  }
}

TEST(Names, ParseRoundTrip) {
  for (auto v : {ViewAxis::axial, ViewAxis::coronal, ViewAxis::sagittal}) EXPECT_EQ(parse_view(to_string(v)), v);
  for (auto m : {DegradationMode::direct_subsample, DegradationMode::blur_noise})
    EXPECT_EQ(parse_degradation(to_string(m)), m);
  for (auto k : {PhantomKind::ellipsoids, PhantomKind::bandlimited_noise, PhantomKind::layered_sine})
    EXPECT_EQ(parse_phantom(to_string(k)), k);
  EXPECT_THROW(parse_view("oblique"), Error);
}
