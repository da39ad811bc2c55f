// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lhbvc/entropy.hpp"
#include "lhbvc/gain.hpp"
#include "lhbvc/layers.hpp"
#include "lhbvc/warp.hpp"

namespace lhbvc {

struct UNetConfig {
  int depth = 4;
  std::int64_t base = 16;
  std::int64_t in = 6;
  std::int64_t out = 4;

  /// Feature width at resolution level i (0 = full resolution).
  std::int64_t channels(int level) const;
  bool operator==(const UNetConfig&) const = default;
};

/// Encoder of stride-2 convolutions, decoder of stride-2 transposed
/// convolutions, skip connections by concatenation, linear output head.
class UNet {
 public:
  UNet() = default;
  UNet(ParamStore& store, const std::string& name, const UNetConfig& cfg, Rng& rng);

  /// Throws std::invalid_argument unless H and W are divisible by 2^depth.
  Tensor operator()(const Tensor& x) const;
  const UNetConfig& config() const { return cfg_; }
  Conv& head() { return head_; }

 private:
  UNetConfig cfg_;
  std::vector<Conv> down_;
  std::vector<Conv> up_;
  std::vector<Conv> merge_;  // index 0 unused
  Conv head_;
};

struct AutoencoderConfig {
  std::int64_t latent = 32;  // N
  std::int64_t hyper = 32;
  int stages = 4;
  int res_blocks = 0;
  std::int64_t hidden = 32;
  std::int64_t in = 3;
  std::int64_t out = 3;
  bool zero_init_output = false;
  /// Initial gain of the middle level. Freshly initialized transforms emit
  /// latents far below the unit quantization bin, so the gains start large.
  double gain_init = 16.0;
  double hyper_gain_init = 4.0;

  std::int64_t stage_channels(int stage) const;
  bool operator==(const AutoencoderConfig&) const = default;
};

/// Downsamples by 2^stages to `latent` channels; GDN between stages (inverse
/// GDN in Synthesis).
class Analysis {
 public:
  Analysis() = default;
  Analysis(ParamStore& store, const std::string& name, const AutoencoderConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  AutoencoderConfig cfg_;
  std::vector<Conv> convs_;
  std::vector<Gdn> norms_;
  std::vector<std::vector<ResBlock>> blocks_;
};

class Synthesis {
 public:
  Synthesis() = default;
  Synthesis(ParamStore& store, const std::string& name, const AutoencoderConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& latent) const;

 private:
  AutoencoderConfig cfg_;
  std::vector<Conv> convs_;
  std::vector<Gdn> norms_;
  std::vector<std::vector<ResBlock>> blocks_;
};

/// Mean and scale of a latent, before gains.
struct EntropyParams {
  Tensor mean;
  Tensor scale;
};

/// One quantization bottleneck: hyperprior transforms, gain sets for latent
/// and hyper-latent, and the factorized prior of the hyper-latent.
class Bottleneck {
 public:
  Bottleneck() = default;
  Bottleneck(ParamStore& store, const std::string& name, const AutoencoderConfig& cfg, int levels, Rng& rng);

  /// [B,N,h,w] -> [B,Nh,h/4,w/4].
  Tensor hyper_encode(const Tensor& y) const;
  /// Dequantized hyper-latent -> per-element mean and scale (scale >= floor).
  EntropyParams hyper_decode(const Tensor& z_hat) const;

  struct Result {
    Tensor y_hat;         // dequantized latent, decoder input
    Tensor y_symbols;     // gained and quantized latent
    Tensor z_symbols;     // gained and quantized hyper-latent
    Tensor mean;          // gained entropy parameters of y_symbols
    Tensor scale;
    Tensor latent_bits;   // scalar estimates
    Tensor hyper_bits;
  };
  /// y is the latent, z = hyper_encode(y).
  Result forward(const Tensor& y, const Tensor& z, const LevelCoefficient& coeff, QuantizeMode mode, Rng& rng) const;

  struct Chunks {
    std::vector<std::uint8_t> latent;
    std::vector<std::uint8_t> hyper;
  };
  /// Codes a Result produced in inference mode.
  Chunks encode(const Result& r) const;
  /// Rebuilds y_hat of shape `y_shape` from chunks.
  Tensor decode(const Chunks& chunks, const Shape& y_shape, const LevelCoefficient& coeff) const;
  /// The two halves of decode(): gained entropy parameters from the hyper
  /// chunk, then y_hat from the latent chunk.
  EntropyParams decode_hyper(std::span<const std::uint8_t> hyper, const Shape& y_shape,
                             const LevelCoefficient& coeff) const;
  Tensor decode_latent(std::span<const std::uint8_t> latent, const EntropyParams& params,
                       const LevelCoefficient& coeff) const;
  const AutoencoderConfig& config() const { return cfg_; }

  GainSet& gain() { return gain_; }
  GainSet& hyper_gain() { return hyper_gain_; }
  const GainSet& gain() const { return gain_; }
  const GainSet& hyper_gain() const { return hyper_gain_; }
  const FactorizedPrior& prior() const { return prior_; }
  FactorizedPrior& prior() { return prior_; }

 private:
  EntropyParams gained(const EntropyParams& p, const Tensor& gain) const;

  AutoencoderConfig cfg_;
  std::vector<Conv> ha_;
  std::vector<Conv> hs_;
  GainSet gain_;
  GainSet hyper_gain_;
  FactorizedPrior prior_;
};

struct ModelConfig {
  int levels = 4;
  UNetConfig motion_unet{4, 8, 6, 4};
  UNetConfig fusion_unet{3, 4, 16, 2};
  AutoencoderConfig motion{32, 32, 4, 0, 32, 19, 4, true};
  AutoencoderConfig residual{32, 32, 4, 0, 32, 3, 3, true};
  AutoencoderConfig intra{32, 32, 4, 0, 32, 3, 3, false};
  bool motion_predictor = true;
  bool frame_fusion = true;
  std::uint64_t seed = 1;

  /// Frames must be padded to a multiple of this.
  std::int64_t alignment() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Every network of the codec with its parameters.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  UNet motion_unet;
  Analysis motion_encoder;
  Synthesis motion_decoder;
  Bottleneck motion_bottleneck;
  UNet fusion_unet;
  Analysis residual_encoder;
  Synthesis residual_decoder;
  Bottleneck residual_bottleneck;
  Analysis intra_encoder;
  Synthesis intra_decoder;
  Bottleneck intra_bottleneck;

 private:
  ModelConfig cfg_;
  ParamStore store_;
};

struct FlowPair {
  FlowField to_past;
  FlowField to_future;
};

/// Bi-directional flows predicted from the two references; zero fields when
/// the model has no motion predictor.
FlowPair motion_predict(const Model& m, const Tensor& past, const Tensor& future);

/// Inputs of the motion refinement encoder.
struct MotionInputs {
  FlowPair predicted;
  Tensor warped_past;    // past warped by predicted.to_past
  Tensor warped_future;
  Tensor past;
  Tensor future;
  Tensor current;
};
Tensor motion_refine_encode(const Model& m, const MotionInputs& in);
/// Residual flows decoded from a (dequantized) latent.
FlowPair motion_refine_decode(const Model& m, const Tensor& latent);

/// Sigmoid masks from the fusion network; constant 0.5 without one.
MaskPair fusion_masks(const Model& m, const Tensor& comp_past, const Tensor& comp_future, const FlowPair& flows,
                      const Tensor& past, const Tensor& future);

struct AutoencodeResult {
  Tensor latent;
  Tensor reconstruction;
};
/// Residual transform pair with the bottleneck bypassed.
AutoencodeResult residual_autoencode(const Model& m, const Tensor& residual);

enum class HyperDirection { kEncode, kDecode };
/// kEncode: latent -> hyper-latent. kDecode: hyper-latent -> [B,2N,h,w] with
/// means in the first N channels and scales in the last N.
Tensor hyper_transform(const Bottleneck& b, const Tensor& x, HyperDirection direction);

struct IntraResult {
  Tensor latent;
  Tensor hyper_latent;
  Tensor reconstruction;
  Bottleneck::Result bottleneck;
};
IntraResult intra_forward(const Model& m, const Tensor& frame, const LevelCoefficient& coeff, QuantizeMode mode,
                          Rng& rng);

}  // namespace lhbvc
