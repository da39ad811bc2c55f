// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace lhbvc {

enum class FrameType : std::uint8_t { kIntra = 0, kBidirectional = 1 };

struct ScheduledFrame {
  int display = 0;
  int order = 0;
  FrameType type = FrameType::kIntra;
  int level = 0;  // hierarchy level, 0 for keyframes
  int past = -1;  // display indices of the references, -1 for keyframes
  int future = -1;
};

/// Dyadic hierarchical-B schedule. Keyframes sit at multiples of the GoP size
/// and are shared by adjacent GoPs; a trailing partial GoP is closed by an
/// extra keyframe at the last frame.
struct GopSchedule {
  int gop = 0;
  int frame_count = 0;
  std::vector<ScheduledFrame> frames;  // coding order

  /// log2(gop): the deepest level a B-frame can have.
  int hierarchy_levels() const;
  /// Coding-order position of each display index.
  std::vector<int> coding_positions() const;
};

/// Each interval between consecutive keyframes is coded after its closing
/// keyframe, in pre-order: midpoint first, then the left and right halves.
/// Throws std::invalid_argument unless gop is a power of two in [2, 128] and
/// num_frames >= 1.
GopSchedule build_gop_schedule(int num_frames, int gop);

}  // namespace lhbvc
