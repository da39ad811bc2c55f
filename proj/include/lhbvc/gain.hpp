// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lhbvc/rng.hpp"
#include "lhbvc/tensor.hpp"

namespace lhbvc {

/// Position between two adjacent trained levels. `fraction` 1 selects level
/// `pair + 1` (the higher-rate one), 0 selects level `pair`.
struct LevelCoefficient {
  int pair = 0;
  double fraction = 1.0;

  /// The coefficient that reproduces trained level `level` exactly.
  static LevelCoefficient at_level(int level);
  /// Inverse of position(): p in [0, levels - 1].
  static LevelCoefficient from_position(double p, int levels);
  /// pair + fraction; monotone in rate.
  double position() const { return pair + fraction; }

  bool operator==(const LevelCoefficient&) const = default;
};

/// Gain vector and its inverse for one operating point, each [C].
struct GainPair {
  Tensor gain;
  Tensor inverse_gain;
};

/// Per-level channel gains of one latent bottleneck.
///
/// Entries are stored as logarithms so they stay positive under any update.
/// Level 0 is the lowest rate.
class GainSet {
 public:
  GainSet() = default;
  /// Level n starts at gain center * exp((n - (levels - 1) / 2) * spread) and
  /// the reciprocal inverse gain.
  GainSet(int levels, std::int64_t channels, double spread = 0.5, double center = 1.0);
  /// Explicit positive vectors, one per level. Throws std::invalid_argument on
  /// nonpositive or ragged input.
  static GainSet from_vectors(const std::vector<std::vector<double>>& gains,
                              const std::vector<std::vector<double>>& inverse_gains);

  int levels() const { return levels_; }
  std::int64_t channels() const { return channels_; }

  /// [levels, C] parameters.
  Tensor& log_gain() { return log_gain_; }
  Tensor& log_inverse_gain() { return log_inverse_gain_; }
  const Tensor& log_gain() const { return log_gain_; }
  const Tensor& log_inverse_gain() const { return log_inverse_gain_; }

  /// Stored vectors of trained level n (differentiable w.r.t. the parameters).
  GainPair level(int n) const;

 private:
  int levels_ = 0;
  std::int64_t channels_ = 0;
  Tensor log_gain_;
  Tensor log_inverse_gain_;
};

/// v = v_hi^l * v_lo^(1-l) for both vectors of the adjacent pair, computed in
/// log space. Endpoints reproduce level(n) bitwise. Throws std::logic_error if
/// the pair is out of range or a stored entry is not a finite positive number.
GainPair interpolate_gain(const GainSet& gains, const LevelCoefficient& coeff);

/// Channel-wise scaling of [B,C,...] by a [C] vector.
Tensor apply_gain(const Tensor& latent, const Tensor& gain);
Tensor apply_inverse_gain(const Tensor& quantized, const Tensor& inverse_gain);

enum class QuantizeMode { kTrain, kInference };

/// kInference rounds half away from zero; kTrain adds U(-0.5, 0.5) noise.
Tensor quantize(const Tensor& latent, QuantizeMode mode, Rng& rng);

/// Step between successive hierarchy levels.
inline constexpr double kLevelStep = 0.33;

/// Coefficients for hierarchy levels 1..hierarchy_levels. Each level lowers
/// the fraction by kLevelStep; a negative fraction moves to the next lower
/// pair (fraction + 1), and the lowest trained level is a floor.
std::vector<LevelCoefficient> level_schedule(const LevelCoefficient& base, int hierarchy_levels);

/// `base` raised by `steps` * kLevelStep, moving to higher pairs past 1 and
/// clamping at the highest trained level (pair count = levels - 1).
LevelCoefficient raise_coefficient(const LevelCoefficient& base, double steps, int levels);

std::string to_string(const LevelCoefficient& c);

}  // namespace lhbvc
