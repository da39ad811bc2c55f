// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/gain.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lhbvc/ops.hpp"

namespace lhbvc {

LevelCoefficient LevelCoefficient::at_level(int level) {
  if (level < 0) throw std::invalid_argument("at_level: negative level");
  if (level == 0) return {0, 0.0};
  return {level - 1, 1.0};
}

LevelCoefficient LevelCoefficient::from_position(double p, int levels) {
  if (levels < 2) throw std::invalid_argument("from_position: need at least two levels");
  const double top = levels - 1;
  if (!(p >= 0.0 && p <= top)) throw std::invalid_argument("from_position: position out of range");
  if (p == top) return {levels - 2, 1.0};
  const int pair = static_cast<int>(std::floor(p));
  return {pair, p - pair};
}

GainSet::GainSet(int levels, std::int64_t channels, double spread, double center)
    : levels_(levels),
      channels_(channels),
      log_gain_(Shape{levels, channels}),
      log_inverse_gain_(Shape{levels, channels}) {
  if (levels < 1 || channels < 1) throw std::invalid_argument("GainSet: levels and channels must be positive");
  if (!(center > 0.0)) throw std::invalid_argument("GainSet: center gain must be positive");
  auto g = log_gain_.mutable_values();
  auto ig = log_inverse_gain_.mutable_values();
  for (int n = 0; n < levels; ++n) {
    const double v = std::log(center) + (n - 0.5 * (levels - 1)) * spread;
    for (std::int64_t c = 0; c < channels; ++c) {
      g[static_cast<std::size_t>(n * channels + c)] = v;
      ig[static_cast<std::size_t>(n * channels + c)] = -v;
    }
  }
  log_gain_.set_requires_grad(true);
  log_inverse_gain_.set_requires_grad(true);
}

GainSet GainSet::from_vectors(const std::vector<std::vector<double>>& gains,
                              const std::vector<std::vector<double>>& inverse_gains) {
  if (gains.empty() || gains.size() != inverse_gains.size()) {
    throw std::invalid_argument("GainSet::from_vectors: need matching nonempty level lists");
  }
  GainSet s(static_cast<int>(gains.size()), static_cast<std::int64_t>(gains[0].size()));
  auto g = s.log_gain_.mutable_values();
  auto ig = s.log_inverse_gain_.mutable_values();
  std::size_t k = 0;
  for (std::size_t n = 0; n < gains.size(); ++n) {
    if (gains[n].size() != gains[0].size() || inverse_gains[n].size() != gains[0].size()) {
      throw std::invalid_argument("GainSet::from_vectors: ragged vectors at level " + std::to_string(n));
    }
    for (std::size_t c = 0; c < gains[n].size(); ++c, ++k) {
      if (!(gains[n][c] > 0.0) || !(inverse_gains[n][c] > 0.0)) {
        throw std::invalid_argument("GainSet::from_vectors: nonpositive entry at level " + std::to_string(n));
      }
      g[k] = std::log(gains[n][c]);
      ig[k] = std::log(inverse_gains[n][c]);
    }
  }
  return s;
}

GainPair GainSet::level(int n) const {
  if (n < 0 || n >= levels_) throw std::out_of_range("GainSet::level: " + std::to_string(n));
  return {exp(select_row(log_gain_, n)), exp(select_row(log_inverse_gain_, n))};
}

namespace {

Tensor blend_log(const Tensor& logs, int hi, int lo, double l) {
  const Tensor a = select_row(logs, hi);
  const Tensor b = select_row(logs, lo);
  for (double v : a.values())
    if (!std::isfinite(v)) throw std::logic_error("interpolate_gain: gain entry is not a finite positive number");
  for (double v : b.values())
    if (!std::isfinite(v)) throw std::logic_error("interpolate_gain: gain entry is not a finite positive number");
  if (l == 1.0) return exp(a);
  if (l == 0.0) return exp(b);
  return exp(add(scale(a, l), scale(b, 1.0 - l)));
}

}  // namespace

GainPair interpolate_gain(const GainSet& gains, const LevelCoefficient& coeff) {
  if (coeff.pair < 0 || coeff.pair + 1 >= gains.levels()) {
    throw std::logic_error("interpolate_gain: pair " + std::to_string(coeff.pair) + " invalid for " +
                           std::to_string(gains.levels()) + " levels");
  }
  if (!(coeff.fraction >= 0.0 && coeff.fraction <= 1.0)) {
    throw std::logic_error("interpolate_gain: fraction outside [0,1]");
  }
  const int hi = coeff.pair + 1, lo = coeff.pair;
  return {blend_log(gains.log_gain(), hi, lo, coeff.fraction),
          blend_log(gains.log_inverse_gain(), hi, lo, coeff.fraction)};
}

Tensor apply_gain(const Tensor& latent, const Tensor& gain) { return scale_channels(latent, gain); }

Tensor apply_inverse_gain(const Tensor& quantized, const Tensor& inverse_gain) {
  return scale_channels(quantized, inverse_gain);
}

Tensor quantize(const Tensor& latent, QuantizeMode mode, Rng& rng) {
  if (mode == QuantizeMode::kInference) return round_half_away(latent);
  return add_uniform_noise(latent, rng);
}

std::vector<LevelCoefficient> level_schedule(const LevelCoefficient& base, int hierarchy_levels) {
  if (hierarchy_levels < 1) throw std::invalid_argument("level_schedule: hierarchy_levels must be >= 1");
  std::vector<LevelCoefficient> out{base};
  LevelCoefficient c = base;
  for (int i = 1; i < hierarchy_levels; ++i) {
    c.fraction -= kLevelStep;
    if (c.fraction < 0.0) {
      if (c.pair > 0) {
        --c.pair;
        c.fraction += 1.0;
      } else {
        c.fraction = 0.0;
      }
    }
    out.push_back(c);
  }
  return out;
}

LevelCoefficient raise_coefficient(const LevelCoefficient& base, double steps, int levels) {
  LevelCoefficient c = base;
  c.fraction += steps * kLevelStep;
  const int top_pair = levels - 2;
  while (c.fraction > 1.0) {
    if (c.pair < top_pair) {
      ++c.pair;
      c.fraction -= 1.0;
    } else {
      c.fraction = 1.0;
    }
  }
  return c;
}

std::string to_string(const LevelCoefficient& c) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "(%d, %.4f)", c.pair, c.fraction);
  return buf;
}

}  // namespace lhbvc
