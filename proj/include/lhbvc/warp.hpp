// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lhbvc/tensor.hpp"

namespace lhbvc {

/// Per-pixel displacement [B,2,H,W]: channel 0 horizontal, channel 1 vertical,
/// in pixels.
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(Tensor t);

  static FlowField zeros(std::int64_t batch, std::int64_t height, std::int64_t width);

  const Tensor& tensor() const { return t_; }
  std::int64_t batch() const { return t_.dim(0); }
  std::int64_t height() const { return t_.dim(2); }
  std::int64_t width() const { return t_.dim(3); }

 private:
  Tensor t_;
};

/// Fusion weights [B,1,H,W] each, nonnegative.
struct MaskPair {
  Tensor m1;
  Tensor m2;
};

/// Stabilizer for the mask normalization m1 + m2.
inline constexpr double kMaskEpsilon = 1e-6;

/// Samples `reference` at (x + flow_x, y + flow_y) for every pixel (x, y).
Tensor backwarp(const Tensor& reference, const FlowField& flow);

/// Mask-weighted blend of two predictions:
///   w = m1 / max(m1 + m2, eps),  out = w * past + (1 - w) * future.
/// The result is a per-pixel convex combination of the inputs.
Tensor fuse_bidirectional(const Tensor& warped_past, const Tensor& warped_future, const MaskPair& masks);

/// FlowField sum; the refinement step final = predicted + residual.
FlowField add_flows(const FlowField& a, const FlowField& b);

}  // namespace lhbvc
