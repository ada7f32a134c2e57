#include <gtest/gtest.h>

#include <random>

#include "scanscribe/masking.hpp"

namespace ss = scanscribe;

TEST(DirectionalSums, Examples) {
  ss::Raster ones(4, 6, 1.0f);
  EXPECT_EQ(ss::directional_sums(ones, ss::Axis::rows), (std::vector<double>{6, 6, 6, 6}));
  ss::Raster zeros(4, 6);
  EXPECT_EQ(ss::directional_sums(zeros, ss::Axis::columns), std::vector<double>(6, 0.0));
  ss::Raster dot(4, 6);
  dot.at(1, 2) = 5.0f;
  EXPECT_EQ(ss::directional_sums(dot, ss::Axis::columns),
            (std::vector<double>{0, 0, 5, 0, 0, 0}));
}

TEST(ObjectMask, BrightRectangle) {
  ss::Raster img(12, 14);
  for (int r = 2; r <= 5; ++r)
    for (int c = 3; c <= 8; ++c) img.at(r, c) = 1.0f;
  EXPECT_EQ(ss::extract_object_mask(img, ss::ThresholdPolicy::relative(0.05)),
            (ss::Box{2, 6, 3, 9}));
}

TEST(ObjectMask, UniformImageIsFullFrame) {
  ss::Raster img(7, 9, 0.4f);
  EXPECT_EQ(ss::extract_object_mask(img), (ss::Box{0, 7, 0, 9}));
}

TEST(ObjectMask, AllZeroThrows) {
  try {
    ss::extract_object_mask(ss::Raster(5, 5));
    FAIL();
  } catch (const ss::Error& e) {
    EXPECT_STREQ(e.what(), "empty object mask");
  }
}

TEST(ObjectMask, AbsoluteThresholdIsStrict) {
  ss::Raster img(3, 3);
  img.at(1, 1) = 2.0f;
  EXPECT_THROW(ss::extract_object_mask(img, ss::ThresholdPolicy::absolute(2.0)), ss::Error);
  EXPECT_EQ(ss::extract_object_mask(img, ss::ThresholdPolicy::absolute(1.5)),
            (ss::Box{1, 2, 1, 2}));
}

TEST(ObjectMask, InvalidPolicyRejected) {
  EXPECT_THROW(ss::ThresholdPolicy::relative(1.5), ss::Error);
  EXPECT_THROW(ss::threshold_policy("fuzzy", 0.1), ss::Error);
}

namespace {

ss::Raster random_blob(std::mt19937& rng) {
  std::uniform_int_distribution<int> pos(0, 20);
  std::uniform_real_distribution<float> val(0.0f, 1.0f);
  ss::Raster img(24, 24);
  for (int k = 0; k < 4; ++k) {
    int r0 = pos(rng), c0 = pos(rng);
    for (int r = r0; r < r0 + 4; ++r)
      for (int c = c0; c < c0 + 4; ++c) img.at(r, c) += val(rng);
  }
  return img;
}

}  // namespace

TEST(ObjectMask, Properties) {
  std::mt19937 rng(21);
  for (int i = 0; i < 100; ++i) {
    const auto img = random_blob(rng);
    const auto lo = ss::extract_object_mask(img, ss::ThresholdPolicy::relative(0.05));
    const auto hi = ss::extract_object_mask(img, ss::ThresholdPolicy::relative(0.4));
    EXPECT_TRUE(lo.contains(hi));

    // Everything outside [top, bottom) is at or below the threshold, the
    // boundary rows are above it.
    const auto rows = ss::directional_sums(img, ss::Axis::rows);
    const double tau = ss::resolve_threshold(rows, ss::ThresholdPolicy::relative(0.05));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r < lo.top || r >= lo.bottom) EXPECT_LE(rows[r], tau);
    }
    EXPECT_GT(rows[static_cast<std::size_t>(lo.top)], tau);
    EXPECT_GT(rows[static_cast<std::size_t>(lo.bottom) - 1], tau);

    auto scaled = img;
    for (auto& v : scaled.pixels) v *= 4.0f;
    EXPECT_EQ(ss::extract_object_mask(scaled), ss::extract_object_mask(img));
  }
}
