// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lhbvc/gain.hpp"
#include "lhbvc/gop.hpp"

namespace lhbvc {

inline constexpr std::uint8_t kBitstreamVersion = 1;

/// One coded frame. Keyframes carry {latent, hyper}; B-frames carry
/// {motion latent, motion hyper, residual latent, residual hyper}.
struct FrameChunk {
  FrameType type = FrameType::kIntra;
  std::uint32_t display = 0;
  LevelCoefficient coeff;
  std::vector<std::vector<std::uint8_t>> payloads;

  std::size_t payload_bytes() const;
  bool operator==(const FrameChunk&) const = default;
};

/// Payload count a frame of `type` must carry.
std::size_t payload_count(FrameType type);

struct Bitstream {
  std::uint16_t width = 0;  // original, before padding
  std::uint16_t height = 0;
  std::uint32_t frame_count = 0;
  std::uint8_t gop = 0;
  LevelCoefficient base;
  LevelCoefficient keyframe;
  std::vector<LevelCoefficient> level_coeffs;  // hierarchy levels 1..log2(gop)
  std::vector<FrameChunk> frames;              // coding order

  /// Sum of chunk payload sizes (headers and length fields excluded).
  std::size_t payload_bytes() const;
  bool operator==(const Bitstream&) const = default;
};

class BitstreamError : public std::runtime_error {
 public:
  BitstreamError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Layout in docs/bitstream.md.
std::vector<std::uint8_t> serialize_bitstream(const Bitstream& stream);
/// Throws BitstreamError on truncation, bad magic or version, trailing bytes,
/// or chunks that disagree with the schedule the header implies.
Bitstream parse_bitstream(std::span<const std::uint8_t> bytes);

/// Payload bits per pixel of the original frames.
double bits_per_pixel(const Bitstream& stream);

}  // namespace lhbvc
