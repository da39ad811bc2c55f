// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "lhbvc/checkpoint.hpp"
#include "lhbvc/eval.hpp"
#include "lhbvc/training.hpp"

namespace lhbvc {
namespace {

Tensor filled(double v, std::int64_t h = 4, std::int64_t w = 6) { return Tensor({1, 3, h, w}, v); }

TEST(Psnr, Examples) {
  EXPECT_EQ(psnr(filled(0.3), filled(0.3)), kPsnrCap);
  EXPECT_NEAR(psnr(filled(0.0), filled(1.0)), 0.0, 1e-12);
  EXPECT_NEAR(psnr(filled(0.5), filled(0.51)), 40.0, 1e-9);
  EXPECT_NEAR(psnr(filled(0.0), filled(2.0), 2.0), 0.0, 1e-12);
  EXPECT_THROW(psnr(filled(0.0, 4, 6), filled(0.0, 6, 4)), std::invalid_argument);
}

TEST(Psnr, SymmetricAndAveragedPerFrame) {
  Rng rng(1);
  Tensor a({1, 3, 8, 8}), b({1, 3, 8, 8});
  for (double& v : a.mutable_values()) v = rng.uniform();
  for (double& v : b.mutable_values()) v = rng.uniform();
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  const std::vector<Tensor> x{filled(0.5), filled(0.5)}, y{filled(0.51), filled(0.5)};
  EXPECT_NEAR(psnr(x, y), (40.0 + kPsnrCap) / 2, 1e-9);
  EXPECT_THROW(psnr(x, std::vector<Tensor>{filled(0.5)}), std::invalid_argument);
}

// Reference values from an independent PCHIP implementation.
TEST(Pchip, MatchesReferenceImplementation) {
  std::vector<double> x{30, 32, 35, 37.5, 41}, y;
  for (double r : {0.1, 0.18, 0.35, 0.6, 1.2}) y.push_back(std::log10(r));
  const Pchip p(x, y);
  const std::pair<double, double> ref[] = {{29.0, -1.1432339078404743}, {31.0, -0.8650145367568888},
                                           {33.7, -0.5758671484757029}, {36.2, -0.34203699747847693},
                                           {40.0, -0.003769807344413731}, {42.0, 0.159256278137683}};
  for (const auto& [q, v] : ref) EXPECT_NEAR(p(q), v, 1e-12) << q;
  EXPECT_NEAR(p.integral(31.0, 40.0), -3.7161735270797984, 1e-12);

  const Pchip flat({0, 1, 2, 3, 4}, {0, 1, 1, 0.5, 3});
  EXPECT_NEAR(flat(0.5), 0.6875, 1e-12);
  EXPECT_NEAR(flat(1.5), 1.0, 1e-12);  // flat step stays flat: no overshoot
  EXPECT_NEAR(flat(2.5), 0.75, 1e-12);
  EXPECT_NEAR(flat(3.5), 1.25, 1e-12);
  EXPECT_NEAR(flat.integral(0, 4), 3.7916666666666665, 1e-12);
}

TEST(Pchip, InterpolatesKnotsAndLinearMode) {
  const std::vector<double> x{1, 2, 4}, y{3, 5, 4};
  const Pchip p(x, y), l(x, y, true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(p(x[i]), y[i], 1e-12);
    EXPECT_NEAR(l(x[i]), y[i], 1e-12);
  }
  EXPECT_NEAR(l(3.0), 4.5, 1e-12);
  EXPECT_NEAR(l.integral(1, 4), 4.0 + 9.0, 1e-12);
  EXPECT_THROW(Pchip({1, 1}, {0, 0}), std::invalid_argument);
  EXPECT_THROW(Pchip({1}, {0}), std::invalid_argument);
}

RdCurve curve(const std::vector<double>& rates, const std::vector<double>& psnrs) {
  RdCurve c;
  for (std::size_t i = 0; i < rates.size(); ++i) c.points.push_back({rates[i], psnrs[i]});
  return c;
}

TEST(BdRate, IdenticalCurvesGiveZero) {
  const RdCurve a = curve({0.1, 0.2, 0.4, 0.8}, {30, 33, 36, 39});
  const BdRate r = bd_rate(a, a);
  EXPECT_EQ(r.percent, 0.0);
  EXPECT_FALSE(r.linear);
}

TEST(BdRate, HalfRateGivesMinusFifty) {
  const RdCurve a = curve({0.1, 0.2, 0.4, 0.8}, {30, 33, 36, 39});
  const RdCurve b = curve({0.05, 0.1, 0.2, 0.4}, {30, 33, 36, 39});
  EXPECT_NEAR(bd_rate(a, b).percent, -50.0, 1e-9);
  EXPECT_NEAR(bd_rate(b, a).percent, 100.0, 1e-9);
}

// Smooth monotone curve: psnr = p0 + s*log2(rate) plus a gentle bend.
RdCurve random_curve(Rng& rng, int points) {
  const double p0 = rng.uniform(30, 36), slope = rng.uniform(2.5, 5), bend = rng.uniform(-0.3, 0.3);
  const double r0 = rng.uniform(0.03, 0.1);
  std::vector<double> rates, psnrs;
  double r = r0;
  for (int i = 0; i < points; ++i) {
    const double t = std::log2(r / r0);
    rates.push_back(r);
    psnrs.push_back(p0 + slope * t + bend * t * t / points);
    r *= rng.uniform(1.4, 2.2);
  }
  return curve(rates, psnrs);
}

double trapezoid(const Pchip& f, double a, double b, int n) {
  const double h = (b - a) / (n - 1);
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n - 1; ++i) s += f(a + i * h);
  return s * h;
}

Pchip fit_of(const RdCurve& c) {
  std::vector<double> x, y;
  for (const RdPoint& p : c.points) {
    x.push_back(p.psnr);
    y.push_back(std::log10(p.rate));
  }
  return Pchip(x, y);
}

TEST(BdRate, MatchesDenseTrapezoidOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const RdCurve a = random_curve(rng, 4 + static_cast<int>(rng.below(3)));
    const RdCurve b = random_curve(rng, 4 + static_cast<int>(rng.below(3)));
    BdRate r;
    try {
      r = bd_rate(a, b);
    } catch (const BdRateError&) {
      continue;
    }
    const Pchip fa = fit_of(a), fb = fit_of(b);
    const double lo = r.psnr_low, hi = r.psnr_high;
    const double delta = (trapezoid(fb, lo, hi, 10000) - trapezoid(fa, lo, hi, 10000)) / (hi - lo);
    const double oracle = (std::pow(10.0, delta) - 1.0) * 100.0;
    EXPECT_NEAR(r.percent, oracle, 0.001 * std::max(1.0, std::abs(oracle))) << trial;
  }
}

TEST(BdRate, Antisymmetric) {
  Rng rng(4);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const RdCurve a = random_curve(rng, 5), b = random_curve(rng, 5);
    try {
      const BdRate ab = bd_rate(a, b), ba = bd_rate(b, a);
      EXPECT_NEAR(ab.log_rate_delta, -ba.log_rate_delta, 1e-9);
      const double predicted = -ba.percent / (1.0 + ba.percent / 100.0);
      EXPECT_NEAR(ab.percent, predicted, 0.002 * std::max(1.0, std::abs(predicted)));
      ++checked;
    } catch (const BdRateError&) {
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(BdRate, ErrorsAndFallback) {
  const RdCurve a = curve({0.1, 0.2, 0.4, 0.8}, {30, 33, 36, 39});
  const RdCurve far = curve({0.1, 0.2, 0.4, 0.8}, {40, 41, 42, 43});
  try {
    bd_rate(a, far);
    FAIL();
  } catch (const BdRateError& e) {
    EXPECT_STREQ(e.what(), "no overlap");
  }
  EXPECT_THROW(bd_rate(a, curve({0.1}, {31})), BdRateError);
  const BdRate twopoint = bd_rate(a, curve({0.1, 0.4}, {31, 37}));
  EXPECT_TRUE(twopoint.linear);
  EXPECT_THROW(bd_rate(a, curve({0.1, 0.2}, {31, 31})), BdRateError);
}

TEST(Spearman, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_NEAR(spearman(x, std::vector<double>{2, 4, 9, 16, 100}), 1.0, 1e-12);
  EXPECT_NEAR(spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-12);
  // d = (0, 0, 1, -1, 0): rho = 1 - 6 * 2 / (5 * 24).
  EXPECT_NEAR(spearman(x, std::vector<double>{1, 2, 4, 3, 5}), 0.9, 1e-12);
  // Ties take average ranks: (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0, 1, 1, 2}),
              4.5 / std::sqrt(5.0 * 4.5), 1e-12);
  EXPECT_THROW(spearman(x, std::vector<double>{1, 2}), std::invalid_argument);
}

class Files : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("lhbvc_eval_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

using CurveFiles = Files;

TEST_F(CurveFiles, CsvRoundTrip) {
  const RdCurve a = curve({0.125, 0.3000000000000001, 0.7}, {30.5, 33.25, 36.125});
  write_curve_csv(dir_ / "a.csv", a);
  const RdCurve b = read_curve_csv(dir_ / "a.csv");
  ASSERT_EQ(b.points.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.points[i].rate, a.points[i].rate);
    EXPECT_EQ(b.points[i].psnr, a.points[i].psnr);
  }
  std::ofstream(dir_ / "bad.csv") << "rate,psnr\n0.1,abc\n";
  EXPECT_THROW(read_curve_csv(dir_ / "bad.csv"), std::runtime_error);
}

TEST(RdCurve, NormalizeSortsAndValidates) {
  RdCurve c = curve({0.4, 0.1, 0.2}, {36, 30, 33});
  c.normalize();
  EXPECT_EQ(c.points.front().rate, 0.1);
  RdCurve bad = curve({0.1, 0.1}, {30, 31});
  EXPECT_THROW(bad.normalize(), std::invalid_argument);
  RdCurve zero = curve({0.0, 0.1}, {30, 31});
  EXPECT_THROW(zero.normalize(), std::invalid_argument);
}

// --- video files ---------------------------------------------------------------

std::vector<Tensor> random_frames(int n, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> frames;
  for (int i = 0; i < n; ++i) {
    Tensor f({1, 3, h, w});
    for (double& v : f.mutable_values()) v = rng.uniform();
    frames.push_back(f);
  }
  return frames;
}

using VideoFiles = Files;

TEST_F(VideoFiles, RawRoundTripWithinQuantization) {
  const auto frames = random_frames(3, 5, 7, 1);
  write_raw_rgb(dir_ / "v.rgb", frames);
  EXPECT_EQ(std::filesystem::file_size(dir_ / "v.rgb"), 3u * 3 * 5 * 7);
  const Video v = read_raw_rgb(dir_ / "v.rgb", 7, 5);
  ASSERT_EQ(v.frames.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < frames[k].numel(); ++i)
      EXPECT_LE(std::abs(v.frames[k][i] - frames[k][i]), 0.5 / 255 + 1e-12);
  // The planar layout puts the red plane first.
  std::ifstream in(dir_ / "v.rgb", std::ios::binary);
  EXPECT_EQ(static_cast<std::uint8_t>(in.get()), to_u8(frames[0][0]));
}

TEST_F(VideoFiles, RawTruncatedFrameIsAnError) {
  write_raw_rgb(dir_ / "v.rgb", random_frames(2, 4, 4, 2));
  std::filesystem::resize_file(dir_ / "v.rgb", 2 * 48 - 5);
  try {
    read_raw_rgb(dir_ / "v.rgb", 4, 4);
    FAIL();
  } catch (const VideoIoError& e) {
    EXPECT_EQ(e.offset(), 48u);
  }
}

TEST(ToU8, RoundsHalfAwayFromZero) {
  EXPECT_EQ(to_u8(0.5 / 255), 1);
  EXPECT_EQ(to_u8(0.49 / 255), 0);
  EXPECT_EQ(to_u8(-1.0), 0);
  EXPECT_EQ(to_u8(2.0), 255);
  EXPECT_EQ(to_u8(128.0 / 255), 128);
}

void write_bytes(const std::filesystem::path& p, const std::string& header, const std::vector<std::uint8_t>& body) {
  std::ofstream out(p, std::ios::binary);
  out << header;
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
}

TEST_F(VideoFiles, Y4mC420HeaderAndFrameCount) {
  // 4x2 luma, 2x1 chroma per plane: 12 bytes per frame, three frames.
  std::string file = "YUV4MPEG2 W4 H2 F30:1 Ip A0:0 C420\n";
  std::vector<std::uint8_t> body;
  for (int f = 0; f < 3; ++f) {
    const std::string tag = "FRAME\n";
    body.insert(body.end(), tag.begin(), tag.end());
    for (int i = 0; i < 8; ++i) body.push_back(static_cast<std::uint8_t>(40 * f + i));
    for (int i = 0; i < 4; ++i) body.push_back(128);
  }
  write_bytes(dir_ / "a.y4m", file, body);
  const Video v = read_y4m(dir_ / "a.y4m");
  EXPECT_EQ(v.width, 4);
  EXPECT_EQ(v.height, 2);
  ASSERT_EQ(v.frames.size(), 3u);
  // Neutral chroma: R = G = B = Y.
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(v.frames[2][static_cast<std::size_t>(c * 8 + 5)], 85.0 / 255, 1e-12);
}

TEST_F(VideoFiles, Y4mBt601FullRange) {
  std::vector<std::uint8_t> body{'F', 'R', 'A', 'M', 'E', '\n', 100, 200, 50};  // one 4:4:4 pixel
  write_bytes(dir_ / "c.y4m", "YUV4MPEG2 W1 H1 C444\n", body);
  const Video v = read_y4m(dir_ / "c.y4m");
  const double y = 100, u = 200 - 128.0, r = 50 - 128.0;
  EXPECT_NEAR(v.frames[0][0], std::clamp((y + 1.402 * r) / 255, 0.0, 1.0), 1e-12);
  EXPECT_NEAR(v.frames[0][1], (y - 0.344136 * u - 0.714136 * r) / 255, 1e-12);
  EXPECT_NEAR(v.frames[0][2], std::clamp((y + 1.772 * u) / 255, 0.0, 1.0), 1e-12);
}

TEST_F(VideoFiles, Y4mTruncatedLastFrameIsAnError) {
  std::string header = "YUV4MPEG2 W4 H2 C420\n";
  std::vector<std::uint8_t> body;
  for (int f = 0; f < 2; ++f) {
    for (char ch : std::string("FRAME\n")) body.push_back(static_cast<std::uint8_t>(ch));
    for (int i = 0; i < 12; ++i) body.push_back(100);
  }
  body.resize(body.size() - 3);
  write_bytes(dir_ / "t.y4m", header, body);
  try {
    read_y4m(dir_ / "t.y4m");
    FAIL();
  } catch (const VideoIoError& e) {
    EXPECT_EQ(e.offset(), header.size() + 18);
    EXPECT_NE(std::string(e.what()).find("truncated frame 1"), std::string::npos);
  }
  write_bytes(dir_ / "m.y4m", "YUV4MPEG W4 H2\n", {});
  EXPECT_THROW(read_y4m(dir_ / "m.y4m"), VideoIoError);
  write_bytes(dir_ / "p.y4m", "YUV4MPEG2 W4 H2 C422\n", {});
  EXPECT_THROW(read_y4m(dir_ / "p.y4m"), VideoIoError);
}

TEST_F(VideoFiles, Y4mWriteReadKeepsGreyAndApproximatesColour) {
  std::vector<Tensor> frames{filled(0.4, 6, 8), random_frames(1, 6, 8, 5)[0]};
  // Smooth the colour frame so 4:2:0 subsampling loses little.
  auto v = frames[1].mutable_values();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 48; ++i) v[static_cast<std::size_t>(c * 48 + i)] = 0.2 + 0.2 * c + 0.01 * (i % 8);
  write_video(dir_ / "w.y4m", frames);
  const Video back = read_video(dir_ / "w.y4m");
  ASSERT_EQ(back.frames.size(), 2u);
  for (double x : back.frames[0].values()) EXPECT_NEAR(x, to_u8(0.4) / 255.0, 1e-12);
  EXPECT_GT(psnr(back.frames[1], frames[1]), 35.0);
}

// --- sweeps ------------------------------------------------------------------

TEST(SweepCoefficients, EvenlySpaced) {
  const auto c = sweep_coefficients(4, 9);
  ASSERT_EQ(c.size(), 9u);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(c[static_cast<std::size_t>(i)].position(), 0.375 * i, 1e-12);
  EXPECT_EQ(c.front(), LevelCoefficient::at_level(0));
  EXPECT_EQ(c.back(), LevelCoefficient::at_level(3));
  EXPECT_EQ(sweep_coefficients(4, 1).size(), 1u);
}

TEST(LevelBits, GroupsByHierarchyLevel) {
  std::vector<FrameStats> stats(4);
  const int levels[] = {0, 0, 1, 2};
  const std::size_t bytes[] = {100, 50, 20, 5};
  for (int i = 0; i < 4; ++i) {
    stats[static_cast<std::size_t>(i)].level = levels[i];
    stats[static_cast<std::size_t>(i)].chunks.push_back({ChunkKind::kIntraLatent, bytes[i], 0.0});
  }
  const auto lb = level_bits(stats);
  ASSERT_EQ(lb.size(), 3u);
  EXPECT_EQ(lb[0].frames, 2);
  EXPECT_EQ(lb[0].mean_bits, 600.0);
  EXPECT_EQ(lb[2].mean_bits, 40.0);
}

ModelConfig small_config() {
  ModelConfig c;
  c.motion_unet = {4, 4, 6, 4};
  c.fusion_unet = {3, 4, 16, 2};
  c.motion = {8, 8, 4, 1, 8, 19, 4, true};
  c.residual = {8, 8, 4, 1, 8, 3, 3, true};
  c.intra = {8, 8, 4, 1, 8, 3, 3, false};
  return c;
}

using SweepFiles = Files;

TEST_F(SweepFiles, SweepAndAblationPlumbing) {
  Model m(small_config());
  const auto clip = synth_clip(PatternFamily::kSinusoid, 3, 64, 64, 1.0, 3);
  const auto levels = sweep_coefficients(4, 4);
  const auto points = rd_sweep(m, clip, 2, levels);
  ASSERT_EQ(points.size(), 4u);
  for (const SweepPoint& p : points) EXPECT_GT(p.bpp, 0.0);
  EXPECT_EQ(rd_sweep(m, clip, 2, std::span(levels).first(1)).size(), 1u);

  // The sweep reproduces a direct encode at each point.
  const EncodeResult direct = encode_sequence(m, clip, CodecConfig{2, levels[2], {}});
  EXPECT_EQ(points[2].bpp, bits_per_pixel(direct.stream));
  EXPECT_EQ(points[2].psnr, psnr(direct.reconstructions, clip));

  write_sweep_csv(dir_ / "s.csv", points);
  const RdCurve fromfile = read_curve_csv(dir_ / "s.csv");
  EXPECT_EQ(fromfile.points.size(), 4u);
  EXPECT_EQ(sweep_to_json(points).size(), 4u);

  save_checkpoint(dir_ / "full.lhbc", m);
  const std::vector<std::vector<Tensor>> clips{clip};
  EXPECT_THROW(ablation_run(clips, {{"no-frame-fusion", dir_ / "full.lhbc"}}, 2, levels), std::invalid_argument);
  const auto same = ablation_run(clips, {{"full", dir_ / "full.lhbc"}, {"copy", dir_ / "full.lhbc"}}, 2, levels);
  ASSERT_EQ(same.size(), 2u);
  EXPECT_EQ(same[0].variant, "full");
  EXPECT_EQ(same[1].bd_rate, 0.0);
  EXPECT_EQ(same[1].clips_compared, 1u);
  EXPECT_EQ(same[1].psnr_delta, 0.0);
  EXPECT_EQ(same[1].parameter_delta, 0);
  EXPECT_THROW(ablation_run(clips, {{"full", dir_ / "missing.lhbc"}}, 2, levels), CheckpointError);
}

TEST(AblationConfig, VariantsDropTheirNetwork) {
  const ModelConfig full = small_config();
  const ModelConfig a = ablation_config(full, "no-motion-predictor");
  const ModelConfig b = ablation_config(full, "no-frame-fusion");
  EXPECT_FALSE(a.motion_predictor);
  EXPECT_TRUE(a.frame_fusion);
  EXPECT_FALSE(b.frame_fusion);
  EXPECT_EQ(ablation_config(full, "full"), full);
  EXPECT_THROW(ablation_config(full, "no-residual"), std::invalid_argument);
  EXPECT_LT(Model(a).params().parameter_count(), Model(full).params().parameter_count());
  EXPECT_LT(Model(b).params().parameter_count(), Model(full).params().parameter_count());
}

TEST(AblationConfig, SharedNetworksStartFromTheSameWeights) {
  const ModelConfig full = small_config();
  const Model m(full), a(ablation_config(full, "no-motion-predictor")), b(ablation_config(full, "no-frame-fusion"));
  int shared = 0;
  for (const auto& [name, t] : m.params().entries()) {
    for (const Model* variant : {&a, &b}) {
      const Tensor* other = variant->params().find(name);
      if (other == nullptr) continue;
      ++shared;
      ASSERT_EQ(other->shape(), t.shape()) << name;
      ASSERT_TRUE(std::ranges::equal(other->values(), t.values())) << name;
    }
  }
  EXPECT_GT(shared, 0);
}

}  // namespace
}  // namespace lhbvc
