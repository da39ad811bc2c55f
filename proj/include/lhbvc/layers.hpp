// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lhbvc/rng.hpp"
#include "lhbvc/tensor.hpp"

namespace lhbvc {

/// Ordered registry of named parameter tensors. Modules keep handles to the
/// same storage, so loading values into the store updates them in place.
class ParamStore {
 public:
  /// Registers a new parameter drawn from U(-bound, bound).
  Tensor add_uniform(const std::string& name, Shape shape, double bound, Rng& rng);
  Tensor add_constant(const std::string& name, Shape shape, double value = 0.0);
  /// Registers an existing tensor (marked as requiring grad).
  void adopt(const std::string& name, Tensor t);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  const Tensor* find(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct ConvSpec {
  std::int64_t in = 0;
  std::int64_t out = 0;
  int kernel = 3;
  int stride = 1;
  bool transposed = false;
  bool zero_init = false;
};

/// conv2d or conv2d_transpose with "same"-style padding: stride-1 keeps the
/// size, stride-2 halves it (conv) or doubles it (transposed).
class Conv {
 public:
  Conv() = default;
  Conv(ParamStore& store, const std::string& name, const ConvSpec& spec, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  const ConvSpec& spec() const { return spec_; }
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  ConvSpec spec_;
  int padding_ = 0;
  Tensor w_;
  Tensor b_;
};

/// x + conv(lrelu(conv(x))).
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParamStore& store, const std::string& name, std::int64_t channels, Rng& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  Conv a_, b_;
};

/// Generalized divisive normalization with squared parameters, so beta and
/// gamma stay non-negative; beta is floored at kBetaFloor.
class Gdn {
 public:
  static constexpr double kBetaFloor = 1e-6;

  Gdn() = default;
  Gdn(ParamStore& store, const std::string& name, std::int64_t channels, bool inverse);
  Tensor operator()(const Tensor& x) const;

 private:
  bool inverse_ = false;
  Tensor beta_;
  Tensor gamma_;
};

}  // namespace lhbvc
