// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/transforms.hpp"

#include <algorithm>
#include <stdexcept>
#include <string_view>
#include <type_traits>

#include "lhbvc/ops.hpp"

namespace lhbvc {

namespace {

void require_channels(const Tensor& x, std::int64_t c, const char* what) {
  if (x.rank() != 4 || x.dim(1) != c) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(c) + " input channels, got " +
                                shape_string(x.shape()));
  }
}

void require_divisible(const Tensor& x, std::int64_t factor, const char* what) {
  if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
    throw std::invalid_argument(std::string(what) + ": spatial size " + shape_string(x.shape()) +
                                " not divisible by " + std::to_string(factor));
  }
}

constexpr int kHyperStages = 2;

// Each network draws its init from its own stream, so ablated variants share
// the initial weights of every network they keep.
Rng module_rng(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : name) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
  return Rng(seed ^ h);
}

// sigmoid(±30) stays strictly inside (0,1) in double precision.
constexpr double kMaskLogitBound = 30.0;

Tensor clamp_abs(const Tensor& x, double bound) {
  return scale(clamp_min(scale(clamp_min(x, -bound), -1.0), -bound), -1.0);
}

}  // namespace

// --- U-Net -------------------------------------------------------------------

std::int64_t UNetConfig::channels(int level) const {
  const std::int64_t c = base << std::max(0, level - 1);
  return std::min(c, 4 * base);
}

UNet::UNet(ParamStore& store, const std::string& name, const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.depth < 1 || cfg.base < 1) throw std::invalid_argument("UNet " + name + ": invalid config");
  down_.emplace_back(store, name + ".down0", ConvSpec{cfg.in, cfg.channels(0), 3, 1}, rng);
  for (int i = 1; i <= cfg.depth; ++i)
    down_.emplace_back(store, name + ".down" + std::to_string(i), ConvSpec{cfg.channels(i - 1), cfg.channels(i), 3, 2},
                       rng);
  up_.resize(static_cast<std::size_t>(cfg.depth));
  merge_.resize(static_cast<std::size_t>(cfg.depth));
  for (int i = cfg.depth - 1; i >= 0; --i) {
    up_[static_cast<std::size_t>(i)] = Conv(store, name + ".up" + std::to_string(i),
                                            ConvSpec{cfg.channels(i + 1), cfg.channels(i), 2, 2, true}, rng);
    if (i > 0)
      merge_[static_cast<std::size_t>(i)] = Conv(store, name + ".merge" + std::to_string(i),
                                                 ConvSpec{2 * cfg.channels(i), cfg.channels(i), 3, 1}, rng);
  }
  head_ = Conv(store, name + ".head", ConvSpec{2 * cfg.channels(0), cfg.out, 3, 1}, rng);
}

Tensor UNet::operator()(const Tensor& x) const {
  require_channels(x, cfg_.in, "UNet");
  require_divisible(x, std::int64_t{1} << cfg_.depth, "UNet");
  std::vector<Tensor> skips;
  Tensor h = leaky_relu(down_[0](x));
  skips.push_back(h);
  for (int i = 1; i <= cfg_.depth; ++i) {
    h = leaky_relu(down_[static_cast<std::size_t>(i)](h));
    skips.push_back(h);
  }
  for (int i = cfg_.depth - 1; i >= 1; --i) {
    const Tensor u = leaky_relu(up_[static_cast<std::size_t>(i)](h));
    h = leaky_relu(merge_[static_cast<std::size_t>(i)](concat_channels({u, skips[static_cast<std::size_t>(i)]})));
  }
  const Tensor u = leaky_relu(up_[0](h));
  return head_(concat_channels({u, skips[0]}));
}

// --- autoencoders ------------------------------------------------------------

std::int64_t AutoencoderConfig::stage_channels(int stage) const {
  if (stage == stages - 1) return latent;
  return stage == 0 ? std::max<std::int64_t>(1, hidden / 2) : hidden;
}

Analysis::Analysis(ParamStore& store, const std::string& name, const AutoencoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  std::int64_t c = cfg.in;
  for (int s = 0; s < cfg.stages; ++s) {
    const std::int64_t o = cfg.stage_channels(s);
    convs_.emplace_back(store, name + ".conv" + std::to_string(s), ConvSpec{c, o, 3, 2}, rng);
    blocks_.emplace_back();
    if (s < cfg.stages - 1) norms_.emplace_back(store, name + ".gdn" + std::to_string(s), o, false);
    if (s < cfg.stages - 1)
      for (int r = 0; r < cfg.res_blocks; ++r)
        blocks_.back().emplace_back(store, name + ".res" + std::to_string(s) + "_" + std::to_string(r), o, rng);
    c = o;
  }
}

Tensor Analysis::operator()(const Tensor& x) const {
  require_channels(x, cfg_.in, "Analysis");
  require_divisible(x, std::int64_t{1} << cfg_.stages, "Analysis");
  Tensor h = x;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    h = convs_[s](h);
    if (s + 1 < convs_.size()) {
      h = norms_[s](h);
      for (const auto& b : blocks_[s]) h = b(h);
    }
  }
  return h;
}

Synthesis::Synthesis(ParamStore& store, const std::string& name, const AutoencoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  std::int64_t c = cfg.latent;
  for (int s = cfg.stages - 2; s >= -1; --s) {
    const bool last = s < 0;
    const std::int64_t o = last ? cfg.out : cfg.stage_channels(s);
    ConvSpec spec{c, o, 4, 2, true, last && cfg.zero_init_output};
    convs_.emplace_back(store, name + ".deconv" + std::to_string(s + 1), spec, rng);
    blocks_.emplace_back();
    if (!last) norms_.emplace_back(store, name + ".igdn" + std::to_string(s), o, true);
    if (!last)
      for (int r = 0; r < cfg.res_blocks; ++r)
        blocks_.back().emplace_back(store, name + ".res" + std::to_string(s) + "_" + std::to_string(r), o, rng);
    c = o;
  }
}

Tensor Synthesis::operator()(const Tensor& latent) const {
  require_channels(latent, cfg_.latent, "Synthesis");
  Tensor h = latent;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    h = convs_[s](h);
    if (s + 1 < convs_.size()) {
      h = norms_[s](h);
      for (const auto& b : blocks_[s]) h = b(h);
    }
  }
  return h;
}

// --- bottleneck --------------------------------------------------------------

Bottleneck::Bottleneck(ParamStore& store, const std::string& name, const AutoencoderConfig& cfg, int levels, Rng& rng)
    : cfg_(cfg),
      gain_(levels, cfg.latent, 0.5, cfg.gain_init),
      hyper_gain_(levels, cfg.hyper, 0.5, cfg.hyper_gain_init),
      prior_(cfg.hyper, rng.next_u64()) {
  const std::int64_t n = cfg.latent, nh = cfg.hyper;
  ha_.emplace_back(store, name + ".ha0", ConvSpec{n, nh, 3, 1}, rng);
  for (int s = 1; s <= kHyperStages; ++s)
    ha_.emplace_back(store, name + ".ha" + std::to_string(s), ConvSpec{nh, nh, 3, 2}, rng);
  for (int s = 0; s < kHyperStages; ++s)
    hs_.emplace_back(store, name + ".hs" + std::to_string(s), ConvSpec{nh, nh, 4, 2, true}, rng);
  hs_.emplace_back(store, name + ".hs" + std::to_string(kHyperStages), ConvSpec{nh, 2 * n, 3, 1}, rng);
  store.adopt(name + ".gain.log", gain_.log_gain());
  store.adopt(name + ".gain.log_inverse", gain_.log_inverse_gain());
  store.adopt(name + ".hyper_gain.log", hyper_gain_.log_gain());
  store.adopt(name + ".hyper_gain.log_inverse", hyper_gain_.log_inverse_gain());
  int k = 0;
  for (Tensor* t : prior_.parameters()) store.adopt(name + ".prior." + std::to_string(k++), *t);
}

Tensor Bottleneck::hyper_encode(const Tensor& y) const {
  require_channels(y, cfg_.latent, "hyper_encode");
  require_divisible(y, std::int64_t{1} << kHyperStages, "hyper_encode");
  Tensor h = y;
  for (std::size_t i = 0; i < ha_.size(); ++i) {
    h = ha_[i](h);
    if (i + 1 < ha_.size()) h = leaky_relu(h);
  }
  return h;
}

EntropyParams Bottleneck::hyper_decode(const Tensor& z_hat) const {
  require_channels(z_hat, cfg_.hyper, "hyper_decode");
  Tensor h = z_hat;
  for (std::size_t i = 0; i < hs_.size(); ++i) {
    h = hs_[i](h);
    if (i + 1 < hs_.size()) h = leaky_relu(h);
  }
  return {slice_channels(h, 0, cfg_.latent), scale_from_raw(slice_channels(h, cfg_.latent, 2 * cfg_.latent))};
}

EntropyParams Bottleneck::gained(const EntropyParams& p, const Tensor& gain) const {
  return {scale_channels(p.mean, gain), clamp_min(scale_channels(p.scale, gain), kScaleFloor)};
}

Bottleneck::Result Bottleneck::forward(const Tensor& y, const Tensor& z, const LevelCoefficient& coeff,
                                       QuantizeMode mode, Rng& rng) const {
  const GainPair g = interpolate_gain(gain_, coeff);
  const GainPair gh = interpolate_gain(hyper_gain_, coeff);
  Result r;
  r.z_symbols = quantize(apply_gain(z, gh.gain), mode, rng);
  r.hyper_bits = bits_factorized(r.z_symbols, prior_).total;
  const EntropyParams p = gained(hyper_decode(apply_inverse_gain(r.z_symbols, gh.inverse_gain)), g.gain);
  r.mean = p.mean;
  r.scale = p.scale;
  r.y_symbols = quantize(apply_gain(y, g.gain), mode, rng);
  r.latent_bits = bits_gaussian(r.y_symbols, r.mean, r.scale).total;
  r.y_hat = apply_inverse_gain(r.y_symbols, g.inverse_gain);
  return r;
}

Bottleneck::Chunks Bottleneck::encode(const Result& r) const {
  Chunks c;
  c.hyper = encode_factorized(r.z_symbols, factorized_tables(prior_));
  c.latent = encode_gaussian(r.y_symbols, r.mean, r.scale);
  return c;
}

Tensor Bottleneck::decode(const Chunks& chunks, const Shape& y_shape, const LevelCoefficient& coeff) const {
  return decode_latent(chunks.latent, decode_hyper(chunks.hyper, y_shape, coeff), coeff);
}

EntropyParams Bottleneck::decode_hyper(std::span<const std::uint8_t> hyper, const Shape& y_shape,
                                       const LevelCoefficient& coeff) const {
  if (y_shape.size() != 4 || y_shape[1] != cfg_.latent || y_shape[2] % 4 != 0 || y_shape[3] % 4 != 0) {
    throw std::invalid_argument("Bottleneck::decode: bad latent shape " + shape_string(y_shape));
  }
  Tape::Paused paused;
  const GainPair g = interpolate_gain(gain_, coeff);
  const GainPair gh = interpolate_gain(hyper_gain_, coeff);
  const Shape z_shape{y_shape[0], cfg_.hyper, y_shape[2] / 4, y_shape[3] / 4};
  const Tensor z = decode_factorized(hyper, z_shape, factorized_tables(prior_));
  return gained(hyper_decode(apply_inverse_gain(z, gh.inverse_gain)), g.gain);
}

Tensor Bottleneck::decode_latent(std::span<const std::uint8_t> latent, const EntropyParams& params,
                                 const LevelCoefficient& coeff) const {
  Tape::Paused paused;
  const GainPair g = interpolate_gain(gain_, coeff);
  return apply_inverse_gain(decode_gaussian(latent, params.mean, params.scale), g.inverse_gain);
}

// --- model -------------------------------------------------------------------

std::int64_t ModelConfig::alignment() const {
  int shift = std::max({motion.stages, residual.stages, intra.stages}) + kHyperStages;
  shift = std::max({shift, motion_unet.depth, fusion_unet.depth});
  return std::int64_t{1} << shift;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.levels < 2) throw std::invalid_argument("Model: at least two rate levels are required");
  if (cfg.motion.in != 19 || cfg.motion.out != 4 || cfg.fusion_unet.in != 16 || cfg.fusion_unet.out != 2 ||
      cfg.motion_unet.in != 6 || cfg.motion_unet.out != 4) {
    throw std::invalid_argument("Model: channel counts of the B-frame networks are fixed");
  }
  const auto build = [&](auto& net, const char* name, const auto& net_cfg) {
    Rng rng = module_rng(cfg.seed, name);
    net = std::remove_reference_t<decltype(net)>(store_, name, net_cfg, rng);
  };
  if (cfg.motion_predictor) build(motion_unet, "motion_unet", cfg.motion_unet);
  build(motion_encoder, "motion_enc", cfg.motion);
  build(motion_decoder, "motion_dec", cfg.motion);
  Rng motion_bn_rng = module_rng(cfg.seed, "motion_bn");
  motion_bottleneck = Bottleneck(store_, "motion_bn", cfg.motion, cfg.levels, motion_bn_rng);
  if (cfg.frame_fusion) build(fusion_unet, "fusion_unet", cfg.fusion_unet);
  build(residual_encoder, "residual_enc", cfg.residual);
  build(residual_decoder, "residual_dec", cfg.residual);
  Rng residual_bn_rng = module_rng(cfg.seed, "residual_bn");
  residual_bottleneck = Bottleneck(store_, "residual_bn", cfg.residual, cfg.levels, residual_bn_rng);
  build(intra_encoder, "intra_enc", cfg.intra);
  build(intra_decoder, "intra_dec", cfg.intra);
  Rng intra_bn_rng = module_rng(cfg.seed, "intra_bn");
  intra_bottleneck = Bottleneck(store_, "intra_bn", cfg.intra, cfg.levels, intra_bn_rng);
}

FlowPair motion_predict(const Model& m, const Tensor& past, const Tensor& future) {
  if (past.shape() != future.shape() || past.rank() != 4 || past.dim(1) != 3) {
    throw std::invalid_argument("motion_predict: references must share a [B,3,H,W] shape");
  }
  if (!m.config().motion_predictor) {
    return {FlowField::zeros(past.dim(0), past.dim(2), past.dim(3)),
            FlowField::zeros(past.dim(0), past.dim(2), past.dim(3))};
  }
  const Tensor out = m.motion_unet(concat_channels({past, future}));
  return {FlowField(slice_channels(out, 0, 2)), FlowField(slice_channels(out, 2, 4))};
}

Tensor motion_refine_encode(const Model& m, const MotionInputs& in) {
  const Tensor x = concat_channels({in.predicted.to_past.tensor(), in.predicted.to_future.tensor(), in.warped_past,
                                    in.warped_future, in.past, in.future, in.current});
  return m.motion_encoder(x);
}

FlowPair motion_refine_decode(const Model& m, const Tensor& latent) {
  const Tensor out = m.motion_decoder(latent);
  return {FlowField(slice_channels(out, 0, 2)), FlowField(slice_channels(out, 2, 4))};
}

MaskPair fusion_masks(const Model& m, const Tensor& comp_past, const Tensor& comp_future, const FlowPair& flows,
                      const Tensor& past, const Tensor& future) {
  if (!m.config().frame_fusion) {
    const Shape s{past.dim(0), 1, past.dim(2), past.dim(3)};
    return {Tensor(s, 0.5), Tensor(s, 0.5)};
  }
  const Tensor x = concat_channels(
      {comp_past, comp_future, flows.to_past.tensor(), flows.to_future.tensor(), past, future});
  const Tensor out = sigmoid(clamp_abs(m.fusion_unet(x), kMaskLogitBound));
  return {slice_channels(out, 0, 1), slice_channels(out, 1, 2)};
}

AutoencodeResult residual_autoencode(const Model& m, const Tensor& residual) {
  AutoencodeResult r;
  r.latent = m.residual_encoder(residual);
  r.reconstruction = m.residual_decoder(r.latent);
  return r;
}

Tensor hyper_transform(const Bottleneck& b, const Tensor& x, HyperDirection direction) {
  if (direction == HyperDirection::kEncode) return b.hyper_encode(x);
  const EntropyParams p = b.hyper_decode(x);
  return concat_channels({p.mean, p.scale});
}

IntraResult intra_forward(const Model& m, const Tensor& frame, const LevelCoefficient& coeff, QuantizeMode mode,
                          Rng& rng) {
  IntraResult r;
  r.latent = m.intra_encoder(frame);
  r.hyper_latent = m.intra_bottleneck.hyper_encode(r.latent);
  r.bottleneck = m.intra_bottleneck.forward(r.latent, r.hyper_latent, coeff, mode, rng);
  r.reconstruction = m.intra_decoder(r.bottleneck.y_hat);
  return r;
}

}  // namespace lhbvc
