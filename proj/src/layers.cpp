// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lhbvc/ops.hpp"

namespace lhbvc {

Tensor ParamStore::add_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
  adopt(name, t);
  return t;
}

Tensor ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  Tensor t(std::move(shape), value);
  adopt(name, t);
  return t;
}

void ParamStore::adopt(const std::string& name, Tensor t) {
  if (find(name)) throw std::logic_error("ParamStore: duplicate parameter " + name);
  t.set_requires_grad(true);
  entries_.emplace_back(name, std::move(t));
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

const Tensor* ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Conv::Conv(ParamStore& store, const std::string& name, const ConvSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.in < 1 || spec.out < 1 || spec.kernel < 1 || spec.stride < 1) {
    throw std::invalid_argument("Conv " + name + ": invalid geometry");
  }
  const std::int64_t k = spec.kernel;
  if (spec.transposed) {
    // Output (H-1)s - 2p + k == sH.
    padding_ = static_cast<int>((k - spec.stride) / 2);
    if ((k - spec.stride) % 2 != 0) throw std::invalid_argument("Conv " + name + ": kernel - stride must be even");
  } else {
    padding_ = static_cast<int>((k - 1) / 2);
  }
  const Shape wshape = spec.transposed ? Shape{spec.in, spec.out, k, k} : Shape{spec.out, spec.in, k, k};
  // Variance 1/fan_in; a transposed conv sees k^2/s^2 taps per input channel.
  const double fan_in = static_cast<double>(spec.in * k * k) / (spec.transposed ? spec.stride * spec.stride : 1);
  const double bound = std::sqrt(3.0 / fan_in);
  if (spec.zero_init) {
    w_ = store.add_constant(name + ".w", wshape);
    b_ = store.add_constant(name + ".b", Shape{spec.out});
  } else {
    w_ = store.add_uniform(name + ".w", wshape, bound, rng);
    b_ = store.add_constant(name + ".b", Shape{spec.out});
  }
}

Tensor Conv::operator()(const Tensor& x) const {
  if (spec_.transposed) return conv2d_transpose(x, w_, b_, spec_.stride, padding_);
  return conv2d(x, w_, b_, spec_.stride, padding_);
}

ResBlock::ResBlock(ParamStore& store, const std::string& name, std::int64_t channels, Rng& rng)
    : a_(store, name + ".a", {channels, channels, 3, 1}, rng), b_(store, name + ".b", {channels, channels, 3, 1}, rng) {}

Tensor ResBlock::operator()(const Tensor& x) const { return add(x, b_(leaky_relu(a_(x)))); }

Gdn::Gdn(ParamStore& store, const std::string& name, std::int64_t channels, bool inverse) : inverse_(inverse) {
  beta_ = store.add_constant(name + ".beta", {channels}, 1.0);
  std::vector<double> g(static_cast<std::size_t>(channels * channels), 0.01);
  for (std::int64_t c = 0; c < channels; ++c) g[static_cast<std::size_t>(c * channels + c)] = std::sqrt(0.1);
  gamma_ = store.add_constant(name + ".gamma", {channels, channels});
  std::copy(g.begin(), g.end(), gamma_.mutable_values().begin());
}

Tensor Gdn::operator()(const Tensor& x) const {
  return gdn(x, add_scalar(mul(beta_, beta_), kBetaFloor), mul(gamma_, gamma_), inverse_);
}

}  // namespace lhbvc
