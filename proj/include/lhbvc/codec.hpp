// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lhbvc/bitstream.hpp"
#include "lhbvc/gop.hpp"
#include "lhbvc/transforms.hpp"

namespace lhbvc {

enum class ChunkKind : std::uint8_t {
  kIntraLatent,
  kIntraHyper,
  kMotionLatent,
  kMotionHyper,
  kResidualLatent,
  kResidualHyper,
};
std::string_view chunk_name(ChunkKind kind);
/// Payload kinds of a frame type, in stream order.
std::vector<ChunkKind> chunk_kinds(FrameType type);

/// Raised when a payload cannot be decoded; names the failing chunk.
class CodecError : public std::runtime_error {
 public:
  CodecError(ChunkKind kind, std::uint32_t display, const std::string& what)
      : std::runtime_error(std::string(chunk_name(kind)) + " chunk of frame " + std::to_string(display) + ": " +
                           what),
        kind_(kind) {}
  ChunkKind kind() const { return kind_; }

 private:
  ChunkKind kind_;
};

struct ChunkStats {
  ChunkKind kind;
  std::size_t bytes = 0;
  double estimated_bits = 0.0;  // rate-model estimate for the coded symbols
};

struct FrameStats {
  std::uint32_t display = 0;
  FrameType type = FrameType::kIntra;
  int level = 0;
  LevelCoefficient coeff;
  std::vector<ChunkStats> chunks;
  double mse = 0.0;  // against the source, over the original frame area

  double bits() const;
  double bits(ChunkKind kind) const;
  double estimated_bits() const;
};

struct EncodedFrame {
  FrameChunk chunk;
  Tensor reconstruction;  // [1,3,H,W] of the padded frame, clamped to [0,1]
  FrameStats stats;
};

/// Frame-level codecs on padded [1,3,H,W] frames (H, W multiples of the
/// model alignment). Reconstructions are clamped to [0,1], and the encoder's
/// reconstruction is bitwise the decoder's.
EncodedFrame encode_iframe(const Model& m, const Tensor& frame, const LevelCoefficient& coeff);
Tensor decode_iframe(const Model& m, const FrameChunk& chunk, std::int64_t height, std::int64_t width);

EncodedFrame encode_bframe(const Model& m, const Tensor& current, const Tensor& past, const Tensor& future,
                           const LevelCoefficient& coeff);
Tensor decode_bframe(const Model& m, const FrameChunk& chunk, const Tensor& past, const Tensor& future);

struct CodecConfig {
  int gop = 16;
  LevelCoefficient base{2, 1.0};
  /// Keyframe coefficient; one schedule step above `base` when unset.
  std::optional<LevelCoefficient> keyframe;
};

struct EncodeResult {
  Bitstream stream;
  std::vector<Tensor> reconstructions;  // display order, original size
  std::vector<FrameStats> stats;        // coding order
};

/// Frames are [1,3,H,W] in [0,1], all the same size. They are edge-padded to
/// the model alignment, coded by the GoP schedule and cropped back.
EncodeResult encode_sequence(const Model& m, const std::vector<Tensor>& frames, const CodecConfig& cfg);
/// Display-order reconstructions at the original size.
std::vector<Tensor> decode_sequence(const Model& m, const Bitstream& stream);

/// Edge replication to `height` x `width` (both >= the input size).
Tensor pad_replicate(const Tensor& frame, std::int64_t height, std::int64_t width);
/// Top-left `height` x `width` window.
Tensor crop(const Tensor& frame, std::int64_t height, std::int64_t width);
/// Smallest multiple of `alignment` that holds `size`.
std::int64_t aligned_size(std::int64_t size, std::int64_t alignment);

}  // namespace lhbvc
