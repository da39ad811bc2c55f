// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/pipeline.hpp"

#include "lhbvc/ops.hpp"

namespace lhbvc {

BFramePrefix bframe_prefix(const Model& m, const Tensor& current, const Tensor& past, const Tensor& future) {
  if (current.shape() != past.shape()) {
    throw std::invalid_argument("bframe_prefix: current frame " + shape_string(current.shape()) +
                                " does not match references " + shape_string(past.shape()));
  }
  BFramePrefix p;
  p.inputs.past = past;
  p.inputs.future = future;
  p.inputs.current = current;
  p.inputs.predicted = motion_predict(m, past, future);
  p.inputs.warped_past = backwarp(past, p.inputs.predicted.to_past);
  p.inputs.warped_future = backwarp(future, p.inputs.predicted.to_future);
  p.motion_latent = motion_refine_encode(m, p.inputs);
  p.motion_hyper_latent = m.motion_bottleneck.hyper_encode(p.motion_latent);
  return p;
}

Compensation bframe_compensate(const Model& m, const FlowPair& predicted, const Tensor& motion_y_hat,
                               const Tensor& past, const Tensor& future) {
  Compensation c;
  const FlowPair residual = motion_refine_decode(m, motion_y_hat);
  c.flows = {add_flows(predicted.to_past, residual.to_past), add_flows(predicted.to_future, residual.to_future)};
  c.comp_past = backwarp(past, c.flows.to_past);
  c.comp_future = backwarp(future, c.flows.to_future);
  c.masks = fusion_masks(m, c.comp_past, c.comp_future, c.flows, past, future);
  c.fused = fuse_bidirectional(c.comp_past, c.comp_future, c.masks);
  return c;
}

BFrameResult bframe_forward(const Model& m, const BFramePrefix& prefix, const LevelCoefficient& coeff,
                            QuantizeMode mode, Rng& rng) {
  BFrameResult r;
  r.motion = m.motion_bottleneck.forward(prefix.motion_latent, prefix.motion_hyper_latent, coeff, mode, rng);
  r.compensation =
      bframe_compensate(m, prefix.inputs.predicted, r.motion.y_hat, prefix.inputs.past, prefix.inputs.future);
  r.residual_latent = m.residual_encoder(sub(prefix.inputs.current, r.compensation.fused));
  r.residual_hyper_latent = m.residual_bottleneck.hyper_encode(r.residual_latent);
  r.residual = m.residual_bottleneck.forward(r.residual_latent, r.residual_hyper_latent, coeff, mode, rng);
  r.reconstruction = add(r.compensation.fused, m.residual_decoder(r.residual.y_hat));
  return r;
}

}  // namespace lhbvc
