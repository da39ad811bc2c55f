// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lhbvc/range_coder.hpp"
#include "lhbvc/rng.hpp"
#include "lhbvc/tensor.hpp"

namespace lhbvc {

/// Minimum latent scale, in gained units.
inline constexpr double kScaleFloor = 0.04;
/// Gaussian support half-width in standard deviations.
inline constexpr double kSupportSigmas = 6.0;
/// Gaussian tables never exceed this many regular symbols.
inline constexpr std::int64_t kMaxSupport = 8192;
/// Bin probabilities are bounded below by this before taking logs.
inline constexpr double kMinLikelihood = 1e-9;

/// Standard normal CDF.
double normal_cdf(double x);

/// Probability mass of the unit bin around y under N(mu, sigma^2).
double gaussian_bin_probability(double y, double mu, double sigma);

struct BitsResult {
  Tensor total;                  // scalar, differentiable
  std::vector<double> elements;  // -log2 p per element
};

/// -log2 of the unit-bin mass of y under N(mean, scale^2), elementwise and
/// summed. `scale` is clamped to `floor`. Differentiable w.r.t. all three.
BitsResult bits_gaussian(const Tensor& y, const Tensor& mean, const Tensor& scale, double floor = kScaleFloor);

/// floor + ln cosh(x): the map from hyper-decoder outputs to scales.
Tensor scale_from_raw(const Tensor& raw, double floor = kScaleFloor);

/// -log2(cdf(z + 0.5) - cdf(z - 0.5)) for any continuous CDF.
double bits_under_cdf(double z, const std::function<double(double)>& cdf);

/// Learned per-channel CDF: a monotone chain R -> 3 -> 3 -> 3 -> R
/// evaluated independently for every channel, sigmoid at the end.
class FactorizedPrior {
 public:
  FactorizedPrior() = default;
  /// Biases are drawn from U(-0.5, 0.5) with `seed`.
  FactorizedPrior(std::int64_t channels, std::uint64_t seed, double init_scale = 10.0);

  std::int64_t channels() const { return channels_; }
  std::vector<Tensor*> parameters();

  /// Logit of the CDF of channel c at x; CDF(x) = sigmoid(logit).
  double logit(std::int64_t c, double x) const;
  double cdf(std::int64_t c, double x) const;
  /// Mass of the unit bin around x.
  double bin_probability(std::int64_t c, double x) const;

  /// Stored tensors, each [C, rows, cols] (matrices) or [C, rows, 1].
  std::vector<Tensor>& matrices() { return matrices_; }
  std::vector<Tensor>& biases() { return biases_; }
  std::vector<Tensor>& factors() { return factors_; }

 private:
  friend BitsResult bits_factorized(const Tensor& z, const FactorizedPrior& prior);
  std::int64_t channels_ = 0;
  std::vector<Tensor> matrices_;  // raw; softplus applied on use
  std::vector<Tensor> biases_;
  std::vector<Tensor> factors_;   // raw; tanh applied on use
};

/// Total -log2 bin mass of z [B,C,...] under the prior; differentiable w.r.t.
/// z and the prior parameters.
BitsResult bits_factorized(const Tensor& z, const FactorizedPrior& prior);

/// Integer table for one coding context: regular symbols lo..lo+n-1 plus an
/// escape symbol at index n.
struct SymbolTable {
  std::int64_t lo = 0;
  CdfTable table;

  std::size_t regular() const { return table.size() - 1; }
};

SymbolTable gaussian_table(double mu, double sigma);
/// Tables for every channel of a prior. Built on both sides from identical
/// parameters, so they are bitwise equal.
std::vector<SymbolTable> factorized_tables(const FactorizedPrior& prior);

/// Codes integer `value` under `t`, escaping to a 32-bit raw value.
void encode_symbol(RangeEncoder& enc, const SymbolTable& t, std::int64_t value);
std::int64_t decode_symbol(RangeDecoder& dec, const SymbolTable& t);

/// Integer latents with per-element Gaussian parameters (all same shape).
std::vector<std::uint8_t> encode_gaussian(const Tensor& symbols, const Tensor& mean, const Tensor& scale);
Tensor decode_gaussian(std::span<const std::uint8_t> bytes, const Tensor& mean, const Tensor& scale);

/// Integer hyper-latents [B,C,...] with per-channel factorized tables.
std::vector<std::uint8_t> encode_factorized(const Tensor& symbols, const std::vector<SymbolTable>& tables);
Tensor decode_factorized(std::span<const std::uint8_t> bytes, const Shape& shape,
                         const std::vector<SymbolTable>& tables);

}  // namespace lhbvc
