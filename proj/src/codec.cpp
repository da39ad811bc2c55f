// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/codec.hpp"

#include <algorithm>
#include <limits>

#include "lhbvc/ops.hpp"
#include "lhbvc/pipeline.hpp"

namespace lhbvc {

namespace {

Tensor clamp_unit(const Tensor& x) {
  Tensor out = x.clone();
  for (double& v : out.mutable_values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void require_frame(const Model& m, const Tensor& frame, const char* what) {
  const std::int64_t a = m.config().alignment();
  if (frame.rank() != 4 || frame.dim(0) != 1 || frame.dim(1) != 3 || frame.dim(2) % a != 0 || frame.dim(3) % a != 0) {
    throw std::invalid_argument(std::string(what) + ": expected a [1,3,H,W] frame with H, W multiples of " +
                                std::to_string(a) + ", got " + shape_string(frame.shape()));
  }
}

void require_coeff(const Model& m, const LevelCoefficient& c, const char* what) {
  if (c.pair < 0 || c.pair > m.config().levels - 2 || !(c.fraction >= 0.0 && c.fraction <= 1.0)) {
    throw std::invalid_argument(std::string(what) + ": coefficient " + to_string(c) + " is outside the model's " +
                                std::to_string(m.config().levels) + " trained levels");
  }
}

Shape latent_shape(const AutoencoderConfig& cfg, std::int64_t h, std::int64_t w) {
  const std::int64_t f = std::int64_t{1} << cfg.stages;
  return {1, cfg.latent, h / f, w / f};
}

void add_chunks(EncodedFrame& out, const Bottleneck& b, const Bottleneck::Result& r, ChunkKind latent,
                ChunkKind hyper) {
  Bottleneck::Chunks c = b.encode(r);
  out.stats.chunks.push_back({latent, c.latent.size(), r.latent_bits.item()});
  out.stats.chunks.push_back({hyper, c.hyper.size(), r.hyper_bits.item()});
  out.chunk.payloads.push_back(std::move(c.latent));
  out.chunk.payloads.push_back(std::move(c.hyper));
}

// Decodes one latent/hyper payload pair, attributing failures to the chunk.
Tensor decode_pair(const Bottleneck& b, const FrameChunk& f, std::size_t first, ChunkKind latent, ChunkKind hyper,
                   const Shape& y_shape) {
  EntropyParams params;
  try {
    params = b.decode_hyper(f.payloads[first + 1], y_shape, f.coeff);
  } catch (const DecodeError& e) {
    throw CodecError(hyper, f.display, e.what());
  }
  try {
    return b.decode_latent(f.payloads[first], params, f.coeff);
  } catch (const DecodeError& e) {
    throw CodecError(latent, f.display, e.what());
  }
}

void require_payloads(const FrameChunk& f, FrameType type) {
  if (f.type != type || f.payloads.size() != payload_count(type)) {
    throw std::invalid_argument("frame " + std::to_string(f.display) + ": chunk does not hold a " +
                                (type == FrameType::kIntra ? "keyframe" : "B-frame"));
  }
}

double frame_mse(const Tensor& a, const Tensor& b, std::int64_t height, std::int64_t width) {
  const std::int64_t h = a.dim(2), w = a.dim(3);
  double s = 0.0;
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t x = 0; x < width; ++x) {
        const auto i = static_cast<std::size_t>((c * h + y) * w + x);
        const double d = a[i] - b[i];
        s += d * d;
      }
  return s / double(3 * height * width);
}

}  // namespace

std::string_view chunk_name(ChunkKind kind) {
  switch (kind) {
    case ChunkKind::kIntraLatent: return "intra-latent";
    case ChunkKind::kIntraHyper: return "intra-hyper";
    case ChunkKind::kMotionLatent: return "motion-latent";
    case ChunkKind::kMotionHyper: return "motion-hyper";
    case ChunkKind::kResidualLatent: return "residual-latent";
    case ChunkKind::kResidualHyper: return "residual-hyper";
  }
  return "unknown";
}

std::vector<ChunkKind> chunk_kinds(FrameType type) {
  if (type == FrameType::kIntra) return {ChunkKind::kIntraLatent, ChunkKind::kIntraHyper};
  return {ChunkKind::kMotionLatent, ChunkKind::kMotionHyper, ChunkKind::kResidualLatent, ChunkKind::kResidualHyper};
}

double FrameStats::bits() const {
  double b = 0.0;
  for (const auto& c : chunks) b += 8.0 * static_cast<double>(c.bytes);
  return b;
}

double FrameStats::bits(ChunkKind kind) const {
  double b = 0.0;
  for (const auto& c : chunks)
    if (c.kind == kind) b += 8.0 * static_cast<double>(c.bytes);
  return b;
}

double FrameStats::estimated_bits() const {
  double b = 0.0;
  for (const auto& c : chunks) b += c.estimated_bits;
  return b;
}

EncodedFrame encode_iframe(const Model& m, const Tensor& frame, const LevelCoefficient& coeff) {
  require_frame(m, frame, "encode_iframe");
  require_coeff(m, coeff, "encode_iframe");
  Tape::Paused paused;
  Rng unused(0);
  const IntraResult r = intra_forward(m, frame, coeff, QuantizeMode::kInference, unused);
  EncodedFrame out;
  out.chunk.type = FrameType::kIntra;
  out.chunk.coeff = coeff;
  out.stats.type = FrameType::kIntra;
  out.stats.coeff = coeff;
  add_chunks(out, m.intra_bottleneck, r.bottleneck, ChunkKind::kIntraLatent, ChunkKind::kIntraHyper);
  out.reconstruction = clamp_unit(r.reconstruction);
  out.stats.mse = frame_mse(out.reconstruction, frame, frame.dim(2), frame.dim(3));
  return out;
}

Tensor decode_iframe(const Model& m, const FrameChunk& chunk, std::int64_t height, std::int64_t width) {
  require_payloads(chunk, FrameType::kIntra);
  require_coeff(m, chunk.coeff, "decode_iframe");
  Tape::Paused paused;
  const Tensor y_hat = decode_pair(m.intra_bottleneck, chunk, 0, ChunkKind::kIntraLatent, ChunkKind::kIntraHyper,
                                   latent_shape(m.config().intra, height, width));
  return clamp_unit(m.intra_decoder(y_hat));
}

EncodedFrame encode_bframe(const Model& m, const Tensor& current, const Tensor& past, const Tensor& future,
                           const LevelCoefficient& coeff) {
  require_frame(m, current, "encode_bframe");
  require_coeff(m, coeff, "encode_bframe");
  if (past.shape() != current.shape() || future.shape() != current.shape()) {
    throw std::invalid_argument("encode_bframe: references must match the current frame's shape");
  }
  Tape::Paused paused;
  Rng unused(0);
  const BFramePrefix prefix = bframe_prefix(m, current, past, future);
  const BFrameResult r = bframe_forward(m, prefix, coeff, QuantizeMode::kInference, unused);
  EncodedFrame out;
  out.chunk.type = FrameType::kBidirectional;
  out.chunk.coeff = coeff;
  out.stats.type = FrameType::kBidirectional;
  out.stats.coeff = coeff;
  add_chunks(out, m.motion_bottleneck, r.motion, ChunkKind::kMotionLatent, ChunkKind::kMotionHyper);
  add_chunks(out, m.residual_bottleneck, r.residual, ChunkKind::kResidualLatent, ChunkKind::kResidualHyper);
  out.reconstruction = clamp_unit(r.reconstruction);
  out.stats.mse = frame_mse(out.reconstruction, current, current.dim(2), current.dim(3));
  return out;
}

Tensor decode_bframe(const Model& m, const FrameChunk& chunk, const Tensor& past, const Tensor& future) {
  require_payloads(chunk, FrameType::kBidirectional);
  require_frame(m, past, "decode_bframe");
  require_coeff(m, chunk.coeff, "decode_bframe");
  if (future.shape() != past.shape()) throw std::invalid_argument("decode_bframe: reference shapes differ");
  Tape::Paused paused;
  const std::int64_t h = past.dim(2), w = past.dim(3);
  const Tensor motion_y = decode_pair(m.motion_bottleneck, chunk, 0, ChunkKind::kMotionLatent,
                                      ChunkKind::kMotionHyper, latent_shape(m.config().motion, h, w));
  const FlowPair predicted = motion_predict(m, past, future);
  const Compensation c = bframe_compensate(m, predicted, motion_y, past, future);
  const Tensor residual_y = decode_pair(m.residual_bottleneck, chunk, 2, ChunkKind::kResidualLatent,
                                        ChunkKind::kResidualHyper, latent_shape(m.config().residual, h, w));
  return clamp_unit(add(c.fused, m.residual_decoder(residual_y)));
}

std::int64_t aligned_size(std::int64_t size, std::int64_t alignment) {
  return (size + alignment - 1) / alignment * alignment;
}

Tensor pad_replicate(const Tensor& frame, std::int64_t height, std::int64_t width) {
  if (frame.rank() != 4 || frame.dim(2) > height || frame.dim(3) > width || frame.dim(2) < 1 || frame.dim(3) < 1) {
    throw std::invalid_argument("pad_replicate: cannot pad " + shape_string(frame.shape()) + " to " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  const std::int64_t b = frame.dim(0), c = frame.dim(1), h = frame.dim(2), w = frame.dim(3);
  Tensor out({b, c, height, width});
  auto o = out.mutable_values();
  const auto in = frame.values();
  for (std::int64_t p = 0; p < b * c; ++p)
    for (std::int64_t y = 0; y < height; ++y) {
      const std::int64_t sy = std::min(y, h - 1);
      for (std::int64_t x = 0; x < width; ++x)
        o[static_cast<std::size_t>((p * height + y) * width + x)] =
            in[static_cast<std::size_t>((p * h + sy) * w + std::min(x, w - 1))];
    }
  return out;
}

Tensor crop(const Tensor& frame, std::int64_t height, std::int64_t width) {
  if (frame.rank() != 4 || frame.dim(2) < height || frame.dim(3) < width) {
    throw std::invalid_argument("crop: window larger than " + shape_string(frame.shape()));
  }
  const std::int64_t b = frame.dim(0), c = frame.dim(1), h = frame.dim(2), w = frame.dim(3);
  Tensor out({b, c, height, width});
  auto o = out.mutable_values();
  const auto in = frame.values();
  for (std::int64_t p = 0; p < b * c; ++p)
    for (std::int64_t y = 0; y < height; ++y)
      std::copy_n(in.begin() + (p * h + y) * w, width, o.begin() + (p * height + y) * width);
  return out;
}

EncodeResult encode_sequence(const Model& m, const std::vector<Tensor>& frames, const CodecConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("encode_sequence: no frames");
  const Shape& shape = frames.front().shape();
  if (shape.size() != 4 || shape[0] != 1 || shape[1] != 3) {
    throw std::invalid_argument("encode_sequence: frames must be [1,3,H,W], got " + shape_string(shape));
  }
  for (const auto& f : frames)
    if (f.shape() != shape) {
      throw std::invalid_argument("encode_sequence: frame size " + shape_string(f.shape()) + " differs from " +
                                  shape_string(shape));
    }
  const std::int64_t height = shape[2], width = shape[3];
  if (height > std::numeric_limits<std::uint16_t>::max() || width > std::numeric_limits<std::uint16_t>::max() ||
      frames.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("encode_sequence: sequence too large for the container");
  }
  require_coeff(m, cfg.base, "encode_sequence");
  const int levels = m.config().levels;
  const LevelCoefficient key = cfg.keyframe.value_or(raise_coefficient(cfg.base, 1.0, levels));
  require_coeff(m, key, "encode_sequence");

  const GopSchedule schedule = build_gop_schedule(static_cast<int>(frames.size()), cfg.gop);
  EncodeResult out;
  Bitstream& s = out.stream;
  s.width = static_cast<std::uint16_t>(width);
  s.height = static_cast<std::uint16_t>(height);
  s.frame_count = static_cast<std::uint32_t>(frames.size());
  s.gop = static_cast<std::uint8_t>(cfg.gop);
  s.base = cfg.base;
  s.keyframe = key;
  s.level_coeffs = level_schedule(cfg.base, schedule.hierarchy_levels());

  const std::int64_t a = m.config().alignment();
  const std::int64_t ph = aligned_size(height, a), pw = aligned_size(width, a);
  std::vector<Tensor> recon(frames.size());
  for (const ScheduledFrame& f : schedule.frames) {
    const Tensor source = pad_replicate(frames[static_cast<std::size_t>(f.display)], ph, pw);
    EncodedFrame e = f.type == FrameType::kIntra
                         ? encode_iframe(m, source, key)
                         : encode_bframe(m, source, recon[static_cast<std::size_t>(f.past)],
                                         recon[static_cast<std::size_t>(f.future)],
                                         s.level_coeffs[static_cast<std::size_t>(f.level - 1)]);
    e.chunk.display = static_cast<std::uint32_t>(f.display);
    e.stats.display = e.chunk.display;
    e.stats.level = f.level;
    e.stats.mse = frame_mse(e.reconstruction, source, height, width);
    recon[static_cast<std::size_t>(f.display)] = e.reconstruction;
    s.frames.push_back(std::move(e.chunk));
    out.stats.push_back(std::move(e.stats));
  }
  for (const auto& r : recon) out.reconstructions.push_back(crop(r, height, width));
  return out;
}

std::vector<Tensor> decode_sequence(const Model& m, const Bitstream& s) {
  const GopSchedule schedule = build_gop_schedule(static_cast<int>(s.frame_count), s.gop);
  if (s.frames.size() != schedule.frames.size()) {
    throw std::invalid_argument("decode_sequence: stream holds " + std::to_string(s.frames.size()) +
                                " frames, header declares " + std::to_string(s.frame_count));
  }
  const std::int64_t a = m.config().alignment();
  const std::int64_t ph = aligned_size(s.height, a), pw = aligned_size(s.width, a);
  std::vector<Tensor> recon(s.frame_count);
  for (std::size_t i = 0; i < schedule.frames.size(); ++i) {
    const ScheduledFrame& f = schedule.frames[i];
    const FrameChunk& chunk = s.frames[i];
    if (chunk.display != static_cast<std::uint32_t>(f.display) || chunk.type != f.type) {
      throw std::invalid_argument("decode_sequence: frame " + std::to_string(i) + " disagrees with the schedule");
    }
    recon[static_cast<std::size_t>(f.display)] =
        f.type == FrameType::kIntra ? decode_iframe(m, chunk, ph, pw)
                                    : decode_bframe(m, chunk, recon[static_cast<std::size_t>(f.past)],
                                                    recon[static_cast<std::size_t>(f.future)]);
  }
  std::vector<Tensor> out;
  out.reserve(recon.size());
  for (const auto& r : recon) out.push_back(crop(r, s.height, s.width));
  return out;
}

}  // namespace lhbvc
