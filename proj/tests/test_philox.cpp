#include <gtest/gtest.h>

#include "support.hpp"

using namespace ddlsff;

// Known-answer vectors published with Random123 (kat_vectors, philox4x32_10).
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, UniformRange) {
  EXPECT_EQ(uniform_from_bits(0, 0), 0.0);
  EXPECT_LT(uniform_from_bits(0xffffffffu, 0xffffffffu), 1.0);
  const RandomStream rng(42, 3, 7);
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 20000; ++i) {
    const double u = rng.uniform(i);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Philox, StreamsAreIndependentOfEvaluationOrder) {
  const RandomStream a(9, 1), b(9, 2), a2(9, 1);
  EXPECT_EQ(a.uniform(100), a2.uniform(100));
  EXPECT_NE(a.uniform(100), b.uniform(100));
  EXPECT_NE(a.uniform(100, 0), a.uniform(100, 1));
  EXPECT_NE(RandomStream(1, 0).uniform(0), RandomStream(2, 0).uniform(0));
}

TEST(Philox, NormalMoments) {
  const RandomStream rng(5, 0);
  const int n = 50000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal(static_cast<std::uint64_t>(i));
    ASSERT_TRUE(std::isfinite(v));
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}
