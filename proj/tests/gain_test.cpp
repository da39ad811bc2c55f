// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/gain.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lhbvc/ops.hpp"

namespace lhbvc {
namespace {

using testing::random_tensor;

TEST(ApplyGain, Examples) {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 2, 2}, rng);
  Tensor ones({3}, 1.0);
  Tensor y = apply_gain(x, ones);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);

  Tensor v({1, 1, 1, 1}, {0.3});
  EXPECT_DOUBLE_EQ(apply_gain(v, Tensor({1}, {2.0}))[0], 0.6);

  Tensor g({3}, {2.5, 0.125, 7.0});
  Tensor r({3}, {1 / 2.5, 8.0, 1 / 7.0});
  Tensor back = apply_inverse_gain(apply_gain(x, g), r);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
}

TEST(ApplyGain, LengthMismatch) {
  EXPECT_THROW(apply_gain(Tensor({1, 3, 2, 2}), Tensor({2}, 1.0)), std::invalid_argument);
  EXPECT_THROW(apply_inverse_gain(Tensor({1, 3, 2, 2}), Tensor({4}, 1.0)), std::invalid_argument);
}

TEST(Quantize, InferenceRounding) {
  Rng rng(2);
  Tensor t({4}, {1.4, -1.5, 2.5, -0.2});
  Tensor q = quantize(t, QuantizeMode::kInference, rng);
  EXPECT_EQ(q[0], 1.0);
  EXPECT_EQ(q[1], -2.0);
  EXPECT_EQ(q[2], 3.0);
  EXPECT_EQ(q[3], 0.0);
  Tensor big = random_tensor({1, 4, 8, 8}, rng, -20, 20);
  for (double v : quantize(big, QuantizeMode::kInference, rng).values()) EXPECT_EQ(v, std::round(v));
}

TEST(Quantize, TrainNoiseSupport) {
  Rng rng(3);
  Tensor x = random_tensor({1, 4, 16, 16}, rng, -5, 5);
  Tensor q = quantize(x, QuantizeMode::kTrain, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LE(std::abs(q[i] - x[i]), 0.5);
}

TEST(InverseGain, RoundingBoundWithReciprocal) {
  Rng rng(4);
  const std::vector<double> gains{0.5, 1.0, 3.0, 10.0};
  Tensor g({4}, gains), ig({4});
  for (std::size_t c = 0; c < 4; ++c) ig.mutable_values()[c] = 1.0 / gains[c];
  Tensor x = random_tensor({2, 4, 6, 6}, rng, -4, 4);
  Tensor rec = apply_inverse_gain(quantize(apply_gain(x, g), QuantizeMode::kInference, rng), ig);
  std::vector<double> worst(4, 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const std::size_t c = (i / 36) % 4;
    worst[c] = std::max(worst[c], std::abs(rec[i] - x[i]));
  }
  for (std::size_t c = 0; c < 4; ++c) EXPECT_LE(worst[c], 0.5 / gains[c] + 1e-12);
  for (std::size_t c = 1; c < 4; ++c) EXPECT_LT(worst[c], 0.5 / gains[c - 1]);
}

TEST(InterpolateGain, EndpointsAreStoredVectorsBitwise) {
  GainSet set(4, 5);
  Rng rng(5);
  for (double& v : set.log_gain().mutable_values()) v = rng.uniform(-2, 2);
  for (double& v : set.log_inverse_gain().mutable_values()) v = rng.uniform(-2, 2);
  for (int pair = 0; pair < 3; ++pair) {
    const GainPair hi = interpolate_gain(set, {pair, 1.0});
    const GainPair lo = interpolate_gain(set, {pair, 0.0});
    const GainPair shi = set.level(pair + 1), slo = set.level(pair);
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_EQ(hi.gain[c], shi.gain[c]);
      EXPECT_EQ(hi.inverse_gain[c], shi.inverse_gain[c]);
      EXPECT_EQ(lo.gain[c], slo.gain[c]);
      EXPECT_EQ(lo.inverse_gain[c], slo.inverse_gain[c]);
    }
  }
}

TEST(InterpolateGain, GeometricMean) {
  GainSet set = GainSet::from_vectors({{1.0}, {4.0}}, {{1.0}, {0.25}});
  EXPECT_EQ(set.level(1).gain[0], 4.0);
  EXPECT_EQ(set.level(0).gain[0], 1.0);
  const GainPair mid = interpolate_gain(set, {0, 0.5});
  EXPECT_NEAR(mid.gain[0], 2.0, 1e-12);
  EXPECT_NEAR(mid.inverse_gain[0], 0.5, 1e-12);
}

TEST(InterpolateGain, BetweenEndpoints) {
  GainSet set(4, 8);
  Rng rng(6);
  for (double& v : set.log_gain().mutable_values()) v = rng.uniform(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const int pair = static_cast<int>(rng.below(3));
    const double l = rng.uniform();
    const Tensor v = interpolate_gain(set, {pair, l}).gain;
    const Tensor a = set.level(pair + 1).gain, b = set.level(pair).gain;
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_GE(v[c], std::min(a[c], b[c]) * (1 - 1e-14));
      EXPECT_LE(v[c], std::max(a[c], b[c]) * (1 + 1e-14));
    }
  }
}

TEST(InterpolateGain, InvalidState) {
  GainSet set(4, 2);
  EXPECT_THROW(interpolate_gain(set, {3, 0.5}), std::logic_error);
  EXPECT_THROW(interpolate_gain(set, {0, 1.5}), std::logic_error);
  set.log_gain().mutable_values()[0] = std::nan("");
  EXPECT_THROW(interpolate_gain(set, {0, 0.5}), std::logic_error);
  EXPECT_THROW(GainSet::from_vectors({{1.0, -1.0}}, {{1.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(GainSet::from_vectors({{1.0, 0.0}}, {{1.0, 1.0}}), std::invalid_argument);
}

TEST(InterpolateGain, GradientFlowsToBothLevels) {
  GainSet set(4, 3);
  Rng rng(7);
  for (double& v : set.log_gain().mutable_values()) v = rng.uniform(-1, 1);
  Tensor x = random_tensor({1, 3, 2, 2}, rng);
  auto r = testing::gradcheck(
      [&] { return sum(apply_gain(x, interpolate_gain(set, {1, 0.3}).gain)); }, {set.log_gain(), x});
  EXPECT_LT(r.relative_error, 1e-6);
}

TEST(LevelSchedule, DeeperLevelsStepDown) {
  const auto s = level_schedule({1, 1.0}, 4);
  ASSERT_EQ(s.size(), 4u);
  const double expect[] = {1.0, 0.67, 0.34, 0.01};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(s[i].pair, 1);
    EXPECT_NEAR(s[i].fraction, expect[i], 1e-12);
  }
}

TEST(LevelSchedule, WrapsToLowerPair) {
  const auto s = level_schedule({2, 0.2}, 2);
  EXPECT_EQ(s[1].pair, 1);
  EXPECT_NEAR(s[1].fraction, 0.87, 1e-12);
}

TEST(LevelSchedule, SingleLevelAndFloor) {
  const auto one = level_schedule({1, 0.4}, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], (LevelCoefficient{1, 0.4}));
  const auto s = level_schedule({0, 0.5}, 4);
  EXPECT_EQ(s[2], (LevelCoefficient{0, 0.0}));
  EXPECT_EQ(s[3], (LevelCoefficient{0, 0.0}));
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LE(s[i].position(), s[i - 1].position());
}

TEST(LevelCoefficient, RaiseAndPositions) {
  EXPECT_EQ(raise_coefficient({2, 1.0}, 1, 4), (LevelCoefficient{2, 1.0}));
  const auto r = raise_coefficient({1, 0.8}, 1, 4);
  EXPECT_EQ(r.pair, 2);
  EXPECT_NEAR(r.fraction, 0.13, 1e-12);
  EXPECT_EQ(LevelCoefficient::at_level(0), (LevelCoefficient{0, 0.0}));
  EXPECT_EQ(LevelCoefficient::at_level(3), (LevelCoefficient{2, 1.0}));
  EXPECT_EQ(LevelCoefficient::from_position(3.0, 4), (LevelCoefficient{2, 1.0}));
  EXPECT_EQ(LevelCoefficient::from_position(1.25, 4), (LevelCoefficient{1, 0.25}));
}

TEST(GainSet, DefaultsArePositiveAndOrdered) {
  GainSet set(4, 6);
  for (int n = 1; n < 4; ++n)
    for (std::size_t c = 0; c < 6; ++c) {
      EXPECT_GT(set.level(n).gain[c], set.level(n - 1).gain[c]);
      EXPECT_NEAR(set.level(n).gain[c] * set.level(n).inverse_gain[c], 1.0, 1e-15);
    }
}

TEST(GainSet, CenterScalesEveryLevel) {
  GainSet plain(3, 2), centered(3, 2, 0.5, 16.0);
  EXPECT_NEAR(centered.level(1).gain[0], 16.0, 1e-12);
  EXPECT_NEAR(centered.level(1).inverse_gain[1], 1.0 / 16.0, 1e-15);
  EXPECT_NEAR(centered.level(2).gain[0], 16.0 * plain.level(2).gain[0], 1e-12);
  EXPECT_THROW(GainSet(3, 2, 0.5, 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace lhbvc
