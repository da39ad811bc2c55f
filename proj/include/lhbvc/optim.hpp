// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lhbvc/tensor.hpp"

namespace lhbvc {

/// Global L2 norm over the gradients of `params` (missing gradients count as 0).
double global_grad_norm(std::span<const Tensor> params);

/// Rescales all gradients so their global norm is at most `max_norm` and
/// returns the factor applied (1 when the norm was already within bounds).
double clip_global_grad_norm(std::span<Tensor> params, double max_norm);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One bias-corrected update of every parameter from its gradient buffer.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step(std::span<Tensor> params);

  std::int64_t steps() const { return step_; }
  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamConfig& config() const { return config_; }

  // Moment buffers, one per parameter in `step` order; exposed for checkpoints.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::int64_t steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace lhbvc
