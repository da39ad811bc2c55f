// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/gop.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace lhbvc {

namespace {

void split(GopSchedule& s, int past, int future, int level) {
  if (future - past < 2) return;
  const int mid = past + (future - past) / 2;
  s.frames.push_back({mid, static_cast<int>(s.frames.size()), FrameType::kBidirectional, level, past, future});
  split(s, past, mid, level + 1);
  split(s, mid, future, level + 1);
}

void add_key(GopSchedule& s, int display) {
  s.frames.push_back({display, static_cast<int>(s.frames.size()), FrameType::kIntra, 0, -1, -1});
}

}  // namespace

int GopSchedule::hierarchy_levels() const { return std::countr_zero(static_cast<unsigned>(gop)); }

std::vector<int> GopSchedule::coding_positions() const {
  std::vector<int> pos(static_cast<std::size_t>(frame_count), -1);
  for (const auto& f : frames) pos[static_cast<std::size_t>(f.display)] = f.order;
  return pos;
}

GopSchedule build_gop_schedule(int num_frames, int gop) {
  if (gop < 2 || gop > 128 || !std::has_single_bit(static_cast<unsigned>(gop))) {
    throw std::invalid_argument("build_gop_schedule: GoP size must be a power of two in [2, 128], got " +
                                std::to_string(gop));
  }
  if (num_frames < 1) throw std::invalid_argument("build_gop_schedule: need at least one frame");
  GopSchedule s;
  s.gop = gop;
  s.frame_count = num_frames;
  add_key(s, 0);
  for (int start = 0; start < num_frames - 1; start += gop) {
    const int end = std::min(start + gop, num_frames - 1);
    add_key(s, end);
    split(s, start, end, 1);
  }
  return s;
}

}  // namespace lhbvc
