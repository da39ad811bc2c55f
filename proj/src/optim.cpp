// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lhbvc {

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_grad_norm(std::span<Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return 1.0;
  const double factor = max_norm / norm;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g *= factor;
  }
  return factor;
}

void Adam::step(std::span<Tensor> params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].numel(), 0.0);
      v_[i].assign(params[i].numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam::step: expected " + std::to_string(m_.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].size() != params[i].numel()) {
      throw std::invalid_argument("Adam::step: parameter " + std::to_string(i) + " has shape " +
                                  shape_string(params[i].shape()) + " but optimizer state has " +
                                  std::to_string(m_[i].size()) + " entries");
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) {
      // Zero gradient: moments decay, parameters move only by their momentum.
      auto& m = m_[i];
      auto& v = v_[i];
      auto x = p.mutable_values();
      for (std::size_t j = 0; j < x.size(); ++j) {
        m[j] *= config_.beta1;
        v[j] *= config_.beta2;
        x[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
      }
      continue;
    }
    auto g = p.grad();
    auto x = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      x[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
    }
  }
}

void Adam::restore(std::int64_t steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  if (m.size() != v.size()) throw std::invalid_argument("Adam::restore: moment lists differ in length");
  step_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace lhbvc
