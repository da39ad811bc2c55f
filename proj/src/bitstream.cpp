// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/bitstream.hpp"

#include <cmath>

#include "lhbvc/byte_io.hpp"

namespace lhbvc {

namespace {

constexpr char kMagic[] = "LHBF";

void write_coeff(ByteWriter& w, const LevelCoefficient& c) {
  w.u8(static_cast<std::uint8_t>(c.pair));
  w.f64(c.fraction);
}

LevelCoefficient read_coeff(ByteReader& r) {
  const std::size_t at = r.offset();
  LevelCoefficient c;
  c.pair = r.u8();
  c.fraction = r.f64();
  if (!(c.fraction >= 0.0 && c.fraction <= 1.0)) throw BitstreamError("fraction outside [0, 1]", at + 1);
  return c;
}

}  // namespace

std::size_t payload_count(FrameType type) { return type == FrameType::kIntra ? 2 : 4; }

std::size_t FrameChunk::payload_bytes() const {
  std::size_t n = 0;
  for (const auto& p : payloads) n += p.size();
  return n;
}

std::size_t Bitstream::payload_bytes() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.payload_bytes();
  return n;
}

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& s) {
  ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u8(kBitstreamVersion);
  w.u16(s.width);
  w.u16(s.height);
  w.u32(s.frame_count);
  w.u8(s.gop);
  write_coeff(w, s.base);
  write_coeff(w, s.keyframe);
  w.u8(static_cast<std::uint8_t>(s.level_coeffs.size()));
  for (const auto& c : s.level_coeffs) write_coeff(w, c);
  for (const auto& f : s.frames) {
    if (f.payloads.size() != payload_count(f.type)) {
      throw std::invalid_argument("serialize_bitstream: frame " + std::to_string(f.display) + " has " +
                                  std::to_string(f.payloads.size()) + " payloads");
    }
    w.u8(static_cast<std::uint8_t>(f.type));
    w.u32(f.display);
    write_coeff(w, f.coeff);
    for (const auto& p : f.payloads) {
      w.u32(static_cast<std::uint32_t>(p.size()));
      w.bytes(p);
    }
  }
  return w.take();
}

Bitstream parse_bitstream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  try {
    Bitstream s;
    if (r.string(4) != std::string_view(kMagic, 4)) throw BitstreamError("bad magic", 0);
    const std::uint8_t version = r.u8();
    if (version != kBitstreamVersion) throw BitstreamError("unsupported version " + std::to_string(version), 4);
    s.width = r.u16();
    s.height = r.u16();
    s.frame_count = r.u32();
    const std::size_t gop_at = r.offset();
    s.gop = r.u8();
    if (s.width == 0 || s.height == 0) throw BitstreamError("zero frame size", 5);
    if (s.frame_count == 0) throw BitstreamError("zero frame count", 9);
    GopSchedule schedule;
    try {
      schedule = build_gop_schedule(static_cast<int>(s.frame_count), s.gop);
    } catch (const std::invalid_argument& e) {
      throw BitstreamError(e.what(), gop_at);
    }
    s.base = read_coeff(r);
    s.keyframe = read_coeff(r);
    const std::size_t levels_at = r.offset();
    const std::uint8_t levels = r.u8();
    if (levels != schedule.hierarchy_levels()) {
      throw BitstreamError("coefficient table has " + std::to_string(levels) + " levels, GoP implies " +
                               std::to_string(schedule.hierarchy_levels()),
                           levels_at);
    }
    for (int i = 0; i < levels; ++i) s.level_coeffs.push_back(read_coeff(r));
    for (const auto& expected : schedule.frames) {
      const std::size_t at = r.offset();
      if (r.remaining() == 0) {
        throw BitstreamError("stream ends after " + std::to_string(s.frames.size()) + " of " +
                                 std::to_string(s.frame_count) + " frames",
                             at);
      }
      FrameChunk f;
      const std::uint8_t type = r.u8();
      if (type > 1) throw BitstreamError("unknown frame type " + std::to_string(type), at);
      f.type = static_cast<FrameType>(type);
      f.display = r.u32();
      if (f.type != expected.type || f.display != static_cast<std::uint32_t>(expected.display)) {
        throw BitstreamError("frame chunk disagrees with the GoP schedule (expected display " +
                                 std::to_string(expected.display) + ")",
                             at);
      }
      f.coeff = read_coeff(r);
      for (std::size_t k = 0; k < payload_count(f.type); ++k) {
        const std::size_t len_at = r.offset();
        const std::uint32_t len = r.u32();
        if (len > r.remaining()) throw BitstreamError("chunk length exceeds stream", len_at);
        auto p = r.bytes(len);
        f.payloads.emplace_back(p.begin(), p.end());
      }
      s.frames.push_back(std::move(f));
    }
    if (r.remaining() != 0) throw BitstreamError("trailing bytes after the last frame", r.offset());
    return s;
  } catch (const ByteReader::Underflow& e) {
    throw BitstreamError("truncated stream", e.offset());
  }
}

double bits_per_pixel(const Bitstream& s) {
  const double pixels = double(s.width) * double(s.height) * double(s.frame_count);
  return pixels > 0 ? 8.0 * static_cast<double>(s.payload_bytes()) / pixels : 0.0;
}

}  // namespace lhbvc
