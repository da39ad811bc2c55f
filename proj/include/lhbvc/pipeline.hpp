// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lhbvc/transforms.hpp"

namespace lhbvc {

/// The part of the B-frame model that does not depend on the rate level:
/// motion prediction, the two prediction warps and the motion encoder.
struct BFramePrefix {
  MotionInputs inputs;
  Tensor motion_latent;
  Tensor motion_hyper_latent;
};
BFramePrefix bframe_prefix(const Model& m, const Tensor& current, const Tensor& past, const Tensor& future);

/// Decoder-side motion compensation from a dequantized motion latent.
struct Compensation {
  FlowPair flows;  // predicted + decoded residual
  Tensor comp_past;
  Tensor comp_future;
  MaskPair masks;
  Tensor fused;
};
Compensation bframe_compensate(const Model& m, const FlowPair& predicted, const Tensor& motion_y_hat,
                               const Tensor& past, const Tensor& future);

struct BFrameResult {
  Bottleneck::Result motion;
  Compensation compensation;
  Tensor residual_latent;
  Tensor residual_hyper_latent;
  Bottleneck::Result residual;
  Tensor reconstruction;  // fused + decoded residual, unclamped
};
/// The rest of the B-frame model at one operating point.
BFrameResult bframe_forward(const Model& m, const BFramePrefix& prefix, const LevelCoefficient& coeff,
                            QuantizeMode mode, Rng& rng);

}  // namespace lhbvc
