// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <map>
#include <set>

#include "gradcheck.hpp"
#include "lhbvc/bitstream.hpp"
#include "lhbvc/codec.hpp"
#include "lhbvc/gop.hpp"
#include "lhbvc/ops.hpp"

namespace lhbvc {
namespace {

using testing::random_tensor;

// --- GoP schedule ------------------------------------------------------------

std::string describe(const ScheduledFrame& f) {
  return (f.type == FrameType::kIntra ? "I" : "B") + std::to_string(f.display) +
         (f.type == FrameType::kIntra ? "" : "(" + std::to_string(f.past) + "," + std::to_string(f.future) + ",L" +
                                                 std::to_string(f.level) + ")");
}

TEST(GopSchedule, FiveFramesGopFour) {
  const GopSchedule s = build_gop_schedule(5, 4);
  std::vector<std::string> got;
  for (const auto& f : s.frames) got.push_back(describe(f));
  EXPECT_EQ(got, (std::vector<std::string>{"I0", "I4", "B2(0,4,L1)", "B1(0,2,L2)", "B3(2,4,L2)"}));
  EXPECT_EQ(s.hierarchy_levels(), 2);
}

TEST(GopSchedule, SingleFrame) {
  const GopSchedule s = build_gop_schedule(1, 16);
  ASSERT_EQ(s.frames.size(), 1u);
  EXPECT_EQ(s.frames[0].type, FrameType::kIntra);
}

TEST(GopSchedule, SeventeenFramesGopSixteen) {
  const GopSchedule s = build_gop_schedule(17, 16);
  std::map<int, int> per_level;
  int keys = 0;
  for (const auto& f : s.frames) {
    if (f.type == FrameType::kIntra) {
      ++keys;
      EXPECT_TRUE(f.display == 0 || f.display == 16);
    } else {
      ++per_level[f.level];
      EXPECT_GE(f.past, 0);
      EXPECT_LE(f.future, 16);
    }
  }
  EXPECT_EQ(keys, 2);
  EXPECT_EQ(per_level, (std::map<int, int>{{1, 1}, {2, 2}, {3, 4}, {4, 8}}));
}

TEST(GopSchedule, TrailingFramesClosedByKeyframe) {
  const GopSchedule s = build_gop_schedule(7, 4);
  std::vector<std::string> got;
  for (const auto& f : s.frames) got.push_back(describe(f));
  EXPECT_EQ(got, (std::vector<std::string>{"I0", "I4", "B2(0,4,L1)", "B1(0,2,L2)", "B3(2,4,L2)", "I6",
                                           "B5(4,6,L1)"}));
}

TEST(GopSchedule, CodingOrderIsTopologicalForAllSizes) {
  for (int gop : {2, 4, 8, 16}) {
    for (int n = 1; n <= 50; ++n) {
      const GopSchedule s = build_gop_schedule(n, gop);
      ASSERT_EQ(static_cast<int>(s.frames.size()), n) << "gop " << gop << " n " << n;
      std::vector<int> decoded_at(static_cast<std::size_t>(n), -1);
      std::map<int, int> level_of;
      for (std::size_t i = 0; i < s.frames.size(); ++i) {
        const ScheduledFrame& f = s.frames[i];
        ASSERT_EQ(f.order, static_cast<int>(i));
        ASSERT_GE(f.display, 0);
        ASSERT_LT(f.display, n);
        ASSERT_EQ(decoded_at[static_cast<std::size_t>(f.display)], -1) << "frame coded twice";
        if (f.type == FrameType::kIntra) {
          EXPECT_TRUE(f.display % gop == 0 || f.display == n - 1);
          EXPECT_EQ(f.level, 0);
        } else {
          ASSERT_GE(decoded_at[static_cast<std::size_t>(f.past)], 0) << "past reference not yet decoded";
          ASSERT_GE(decoded_at[static_cast<std::size_t>(f.future)], 0) << "future reference not yet decoded";
          EXPECT_LT(f.past, f.display);
          EXPECT_GT(f.future, f.display);
          EXPECT_EQ(f.level, std::max(level_of[f.past], level_of[f.future]) + 1);
          EXPECT_LE(f.level, s.hierarchy_levels());
        }
        decoded_at[static_cast<std::size_t>(f.display)] = static_cast<int>(i);
        level_of[f.display] = f.level;
      }
      EXPECT_EQ(s.coding_positions(), decoded_at);
    }
  }
}

TEST(GopSchedule, RejectsInvalidArguments) {
  EXPECT_THROW(build_gop_schedule(10, 6), std::invalid_argument);
  EXPECT_THROW(build_gop_schedule(10, 1), std::invalid_argument);
  EXPECT_THROW(build_gop_schedule(10, 256), std::invalid_argument);
  EXPECT_THROW(build_gop_schedule(0, 4), std::invalid_argument);
}

// --- frame codecs ------------------------------------------------------------

ModelConfig small_config() {
  ModelConfig c;
  c.motion_unet = {4, 4, 6, 4};
  c.fusion_unet = {3, 4, 16, 2};
  c.motion = {8, 8, 4, 1, 8, 19, 4, true};
  c.residual = {8, 8, 4, 1, 8, 3, 3, true};
  c.intra = {8, 8, 4, 1, 8, 3, 3, false};
  return c;
}

// The zero-initialized output layers would make every B-frame trivially
// predicted, and untrained latents mostly quantize to zero. Random output
// layers and larger gains exercise the full decode path.
void randomize_outputs(Model& m, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& [name, t] : m.params().entries()) {
    const auto ends_with = [&](std::string_view s) { return name.ends_with(s); };
    if (ends_with("gain.log") || ends_with("gain.log_inverse")) {
      Tensor p = t;
      for (double& v : p.mutable_values()) v += ends_with("gain.log") ? 2.5 : -2.5;
      continue;
    }
    if (name.find("motion_dec.deconv0") == std::string::npos && name.find("residual_dec.deconv0") == std::string::npos)
      continue;
    Tensor p = t;
    for (double& v : p.mutable_values()) v = rng.uniform(-0.05, 0.05);
  }
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

// Smooth moving pattern so B-frames have real structure to code.
std::vector<Tensor> moving_sequence(int n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  const double fx = rng.uniform(0.05, 0.3), fy = rng.uniform(0.05, 0.3), vx = rng.uniform(-1.5, 1.5);
  std::vector<Tensor> out;
  for (int t = 0; t < n; ++t) {
    Tensor f({1, 3, h, w});
    auto v = f.mutable_values();
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          v[static_cast<std::size_t>((c * h + y) * w + x)] =
              0.5 + 0.4 * std::sin(fx * (double(x) - vx * t) + fy * double(y) + double(c));
    out.push_back(f);
  }
  return out;
}

class CodecTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new Model(small_config());
    randomize_outputs(*model_, 5);
  }
  static void TearDownTestSuite() {
    delete model_;
    model_ = nullptr;
  }
  static Model* model_;
};
Model* CodecTest::model_ = nullptr;

TEST_F(CodecTest, IntraRoundTripIsBitwise) {
  Rng rng(1);
  const Tensor x = random_tensor({1, 3, 64, 128}, rng, 0, 1);
  for (const LevelCoefficient c : {LevelCoefficient{0, 0.0}, LevelCoefficient{1, 0.5}, LevelCoefficient{2, 1.0}}) {
    const EncodedFrame e = encode_iframe(*model_, x, c);
    EXPECT_EQ(e.chunk.payloads.size(), 2u);
    EXPECT_EQ(e.stats.bits(), 8.0 * double(e.chunk.payload_bytes()));
    const Tensor d = decode_iframe(*model_, e.chunk, 64, 128);
    EXPECT_TRUE(bitwise_equal(d, e.reconstruction)) << to_string(c);
    for (double v : d.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST_F(CodecTest, BFrameRoundTripIsBitwise) {
  const auto seq = moving_sequence(3, 64, 64, 2);
  for (const LevelCoefficient c : {LevelCoefficient{0, 0.0}, LevelCoefficient{1, 0.37}, LevelCoefficient{2, 1.0}}) {
    const EncodedFrame e = encode_bframe(*model_, seq[1], seq[0], seq[2], c);
    ASSERT_EQ(e.chunk.payloads.size(), 4u);
    EXPECT_EQ(e.stats.bits(), 8.0 * double(e.chunk.payload_bytes()));
    EXPECT_EQ(e.stats.bits(ChunkKind::kMotionLatent), 8.0 * double(e.chunk.payloads[0].size()));
    EXPECT_EQ(e.stats.bits(ChunkKind::kResidualHyper), 8.0 * double(e.chunk.payloads[3].size()));
    const Tensor d = decode_bframe(*model_, e.chunk, seq[0], seq[2]);
    EXPECT_TRUE(bitwise_equal(d, e.reconstruction)) << to_string(c);
  }
}

TEST_F(CodecTest, ChangedCoefficientBreaksDecoding) {
  const auto seq = moving_sequence(3, 64, 64, 3);
  EncodedFrame e = encode_bframe(*model_, seq[1], seq[0], seq[2], {1, 0.8});
  e.chunk.coeff = {1, 0.2};
  bool mismatch = false;
  try {
    mismatch = !bitwise_equal(decode_bframe(*model_, e.chunk, seq[0], seq[2]), e.reconstruction);
  } catch (const CodecError&) {
    mismatch = true;
  }
  EXPECT_TRUE(mismatch);

  EncodedFrame i = encode_iframe(*model_, seq[0], {2, 1.0});
  i.chunk.coeff = {0, 0.0};
  try {
    mismatch = !bitwise_equal(decode_iframe(*model_, i.chunk, 64, 64), i.reconstruction);
  } catch (const CodecError&) {
    mismatch = true;
  }
  EXPECT_TRUE(mismatch);
}

TEST_F(CodecTest, TamperedPayloadIsDetected) {
  const auto seq = moving_sequence(3, 64, 64, 4);
  const EncodedFrame e = encode_bframe(*model_, seq[1], seq[0], seq[2], {2, 1.0});
  int detected = 0, trials = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    if (e.chunk.payloads[k].empty()) continue;
    FrameChunk bad = e.chunk;
    bad.payloads[k][bad.payloads[k].size() / 2] ^= 0x5a;
    ++trials;
    try {
      if (!bitwise_equal(decode_bframe(*model_, bad, seq[0], seq[2]), e.reconstruction)) ++detected;
    } catch (const CodecError& err) {
      // A corrupt hyper chunk may only surface while decoding its latent.
      const auto kinds = chunk_kinds(FrameType::kBidirectional);
      EXPECT_TRUE(err.kind() == kinds[k] || err.kind() == kinds[k & ~std::size_t{1}]) << err.what();
      ++detected;
    }
  }
  EXPECT_EQ(detected, trials);
  // A truncated chunk is always a decode error naming it.
  FrameChunk cut = e.chunk;
  cut.payloads[2].clear();
  cut.payloads[3].clear();
  try {
    decode_bframe(*model_, cut, seq[0], seq[2]);
  } catch (const CodecError& err) {
    EXPECT_TRUE(err.kind() == ChunkKind::kResidualHyper || err.kind() == ChunkKind::kResidualLatent);
  }
}

TEST_F(CodecTest, RejectsBadFrameShapes) {
  Rng rng(5);
  EXPECT_THROW(encode_iframe(*model_, random_tensor({1, 3, 48, 64}, rng), {0, 0.0}), std::invalid_argument);
  EXPECT_THROW(encode_iframe(*model_, random_tensor({1, 3, 64, 64}, rng), {3, 0.0}), std::invalid_argument);
  EXPECT_THROW(encode_sequence(*model_, {random_tensor({1, 3, 8, 8}, rng), random_tensor({1, 3, 8, 9}, rng)}, {}),
               std::invalid_argument);
}

TEST_F(CodecTest, SequenceRoundTripAcrossGopsAndLengths) {
  for (int gop : {2, 4, 8, 16}) {
    for (int n : {1, 5, 17, 33}) {
      const auto seq = moving_sequence(n, 64, 64, static_cast<std::uint64_t>(gop * 100 + n));
      CodecConfig cfg;
      cfg.gop = gop;
      cfg.base = {1, 0.6};
      const EncodeResult enc = encode_sequence(*model_, seq, cfg);
      const Bitstream parsed = parse_bitstream(serialize_bitstream(enc.stream));
      ASSERT_EQ(parsed, enc.stream);
      const auto dec = decode_sequence(*model_, parsed);
      ASSERT_EQ(dec.size(), seq.size());
      for (int i = 0; i < n; ++i)
        ASSERT_TRUE(bitwise_equal(dec[static_cast<std::size_t>(i)], enc.reconstructions[static_cast<std::size_t>(i)]))
            << "gop " << gop << " n " << n << " frame " << i;
    }
  }
}

TEST_F(CodecTest, PaddingIsCroppedAway) {
  Rng rng(6);
  std::vector<Tensor> seq;
  for (int i = 0; i < 3; ++i) seq.push_back(random_tensor({1, 3, 50, 70}, rng, 0, 1));
  const EncodeResult enc = encode_sequence(*model_, seq, CodecConfig{2, {2, 1.0}, {}});
  EXPECT_EQ(enc.stream.width, 70);
  EXPECT_EQ(enc.stream.height, 50);
  const auto dec = decode_sequence(*model_, enc.stream);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(dec[i].shape(), (Shape{1, 3, 50, 70}));
    EXPECT_TRUE(bitwise_equal(dec[i], enc.reconstructions[i]));
  }
}

TEST_F(CodecTest, HeaderRecordsSchedule) {
  const auto seq = moving_sequence(9, 64, 64, 7);
  CodecConfig cfg;
  cfg.gop = 8;
  cfg.base = {1, 0.2};
  const EncodeResult enc = encode_sequence(*model_, seq, cfg);
  EXPECT_EQ(enc.stream.level_coeffs, level_schedule(cfg.base, 3));
  EXPECT_EQ(enc.stream.keyframe, raise_coefficient(cfg.base, 1.0, 4));
  EXPECT_NEAR(enc.stream.keyframe.position(), 1.53, 1e-12);
  const GopSchedule s = build_gop_schedule(9, 8);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    const FrameChunk& f = enc.stream.frames[i];
    if (f.type == FrameType::kIntra)
      EXPECT_EQ(f.coeff, enc.stream.keyframe);
    else
      EXPECT_EQ(f.coeff, enc.stream.level_coeffs[static_cast<std::size_t>(s.frames[i].level - 1)]);
    EXPECT_EQ(enc.stats[i].bits(), 8.0 * double(f.payload_bytes()));
  }
  cfg.keyframe = LevelCoefficient{0, 0.25};
  EXPECT_EQ(encode_sequence(*model_, {seq[0]}, cfg).stream.frames[0].coeff, *cfg.keyframe);
}

TEST_F(CodecTest, StreamSizeIsHeaderPlusChunks) {
  const auto seq = moving_sequence(5, 64, 64, 8);
  const EncodeResult enc = encode_sequence(*model_, seq, CodecConfig{4, {2, 1.0}, {}});
  const std::size_t header = 4 + 1 + 2 + 2 + 4 + 1 + 9 + 9 + 1 + 9 * enc.stream.level_coeffs.size();
  std::size_t chunks = 0;
  for (const auto& f : enc.stream.frames) chunks += 1 + 4 + 9 + 4 * f.payloads.size() + f.payload_bytes();
  EXPECT_EQ(serialize_bitstream(enc.stream).size(), header + chunks);
}

// --- container ---------------------------------------------------------------

Bitstream random_stream(Rng& rng, std::uint32_t frames, std::uint8_t gop) {
  Bitstream s;
  s.width = static_cast<std::uint16_t>(1 + rng.below(500));
  s.height = static_cast<std::uint16_t>(1 + rng.below(500));
  s.frame_count = frames;
  s.gop = gop;
  s.base = {static_cast<int>(rng.below(3)), rng.uniform()};
  s.keyframe = raise_coefficient(s.base, 1.0, 4);
  const GopSchedule sched = build_gop_schedule(static_cast<int>(frames), gop);
  s.level_coeffs = level_schedule(s.base, sched.hierarchy_levels());
  for (const auto& f : sched.frames) {
    FrameChunk c;
    c.type = f.type;
    c.display = static_cast<std::uint32_t>(f.display);
    c.coeff = {static_cast<int>(rng.below(3)), rng.uniform()};
    for (std::size_t k = 0; k < payload_count(f.type); ++k) {
      std::vector<std::uint8_t> p(rng.below(40));
      for (auto& b : p) b = static_cast<std::uint8_t>(rng.below(256));
      c.payloads.push_back(p);
    }
    s.frames.push_back(c);
  }
  return s;
}

TEST(Bitstream, RoundTripIsByteExact) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Bitstream s = random_stream(rng, static_cast<std::uint32_t>(1 + rng.below(40)),
                                      static_cast<std::uint8_t>(2 << rng.below(4)));
    const auto bytes = serialize_bitstream(s);
    const Bitstream p = parse_bitstream(bytes);
    EXPECT_EQ(p, s);
    EXPECT_EQ(serialize_bitstream(p), bytes);
  }
}

TEST(Bitstream, HeaderLayout) {
  Rng rng(10);
  const Bitstream s = random_stream(rng, 3, 2);
  const auto b = serialize_bitstream(s);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "LHBF");
  EXPECT_EQ(b[4], kBitstreamVersion);
  EXPECT_EQ(b[5] | (b[6] << 8), s.width);
  EXPECT_EQ(b[7] | (b[8] << 8), s.height);
  EXPECT_EQ(b[9], 3);
  EXPECT_EQ(b[10] | b[11] | b[12], 0);
  EXPECT_EQ(b[13], 2);
}

TEST(Bitstream, ParseErrorsCarryOffsets) {
  Rng rng(11);
  const auto bytes = serialize_bitstream(random_stream(rng, 5, 4));
  const auto expect_error = [](std::vector<std::uint8_t> b, std::size_t offset) {
    try {
      parse_bitstream(b);
      ADD_FAILURE() << "no error";
    } catch (const BitstreamError& e) {
      EXPECT_EQ(e.offset(), offset) << e.what();
    }
  };
  expect_error({}, 0);
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  expect_error(bad_magic, 0);
  auto bad_version = bytes;
  bad_version[4] = 9;
  expect_error(bad_version, 4);
  EXPECT_THROW(parse_bitstream(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)), BitstreamError);
  expect_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 12), 9);
  auto trailing = bytes;
  trailing.push_back(0);
  expect_error(trailing, bytes.size());
  auto more_frames = bytes;
  more_frames[9] = 6;  // header now declares six frames
  EXPECT_THROW(parse_bitstream(more_frames), BitstreamError);
  auto fewer_frames = bytes;
  fewer_frames[9] = 4;
  EXPECT_THROW(parse_bitstream(fewer_frames), BitstreamError);
  auto bad_gop = bytes;
  bad_gop[13] = 3;
  expect_error(bad_gop, 13);
}

TEST(Bitstream, BitsPerPixel) {
  Bitstream s;
  s.width = 100;
  s.height = 10;
  s.frame_count = 10;
  for (int i = 0; i < 10; ++i) {
    FrameChunk c;
    c.payloads = {std::vector<std::uint8_t>(60), std::vector<std::uint8_t>(40)};
    s.frames.push_back(c);
  }
  EXPECT_DOUBLE_EQ(bits_per_pixel(s), 0.8);
  Bitstream doubled = s;
  doubled.frame_count = 20;
  doubled.frames.insert(doubled.frames.end(), s.frames.begin(), s.frames.end());
  EXPECT_DOUBLE_EQ(bits_per_pixel(doubled), 0.8);
  for (auto& f : s.frames)
    for (auto& p : f.payloads) p.clear();
  EXPECT_EQ(bits_per_pixel(s), 0.0);
}

TEST(Padding, ReplicateAndCrop) {
  Rng rng(12);
  const Tensor x = random_tensor({1, 3, 5, 7}, rng);
  const Tensor p = pad_replicate(x, 8, 16);
  EXPECT_EQ(p.shape(), (Shape{1, 3, 8, 16}));
  EXPECT_EQ(p[(2 * 8 + 7) * 16 + 15], x[(2 * 5 + 4) * 7 + 6]);
  EXPECT_EQ(p[(1 * 8 + 0) * 16 + 10], x[(1 * 5 + 0) * 7 + 6]);
  EXPECT_TRUE(bitwise_equal(crop(p, 5, 7), x));
  EXPECT_EQ(aligned_size(50, 64), 64);
  EXPECT_EQ(aligned_size(64, 64), 64);
  EXPECT_EQ(aligned_size(65, 64), 128);
}

}  // namespace
}  // namespace lhbvc
