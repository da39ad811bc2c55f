// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lhbvc/checkpoint.hpp"
#include "lhbvc/eval.hpp"

namespace lhbvc {

std::vector<LevelBits> level_bits(std::span<const FrameStats> stats) {
  std::map<int, LevelBits> by_level;
  for (const FrameStats& s : stats) {
    LevelBits& l = by_level[s.level];
    l.level = s.level;
    ++l.frames;
    l.mean_bits += s.bits();
  }
  std::vector<LevelBits> out;
  for (auto& [level, l] : by_level) {
    l.mean_bits /= l.frames;
    out.push_back(l);
  }
  return out;
}

std::vector<SweepPoint> rd_sweep(const Model& m, const std::vector<Tensor>& frames, int gop,
                                 std::span<const LevelCoefficient> bases) {
  std::vector<SweepPoint> out;
  for (const LevelCoefficient& base : bases) {
    const EncodeResult r = encode_sequence(m, frames, CodecConfig{gop, base, {}});
    SweepPoint p;
    p.base = base;
    p.bpp = bits_per_pixel(r.stream);
    p.psnr = psnr(r.reconstructions, frames);
    p.levels = level_bits(r.stats);
    out.push_back(std::move(p));
  }
  return out;
}

RdCurve to_curve(std::span<const SweepPoint> points, const std::string& label) {
  RdCurve c{label, {}};
  for (const SweepPoint& p : points) c.points.push_back({p.bpp, p.psnr});
  std::stable_sort(c.points.begin(), c.points.end(),
                   [](const RdPoint& a, const RdPoint& b) { return a.rate < b.rate; });
  return c;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  const auto precision = out.precision(17);
  out << "pair,fraction,position,bpp,psnr\n";
  for (const SweepPoint& p : points)
    out << p.base.pair << ',' << p.base.fraction << ',' << p.base.position() << ',' << p.bpp << ',' << p.psnr << '\n';
  out.precision(precision);
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepPoint> points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_sweep_csv(out, points);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

nlohmann::json sweep_to_json(std::span<const SweepPoint> points) {
  nlohmann::json j = nlohmann::json::array();
  for (const SweepPoint& p : points) {
    nlohmann::json levels = nlohmann::json::array();
    for (const LevelBits& l : p.levels)
      levels.push_back({{"level", l.level}, {"frames", l.frames}, {"mean_bits", l.mean_bits}});
    j.push_back({{"pair", p.base.pair},
                 {"fraction", p.base.fraction},
                 {"position", p.base.position()},
                 {"bpp", p.bpp},
                 {"psnr", p.psnr},
                 {"levels", levels}});
  }
  return j;
}

std::vector<LevelCoefficient> sweep_coefficients(int levels, int count) {
  if (levels < 2 || count < 1) throw std::invalid_argument("sweep_coefficients: need 2+ levels and 1+ points");
  std::vector<LevelCoefficient> out;
  if (count == 1) return {LevelCoefficient::at_level(levels - 1)};
  for (int i = 0; i < count; ++i)
    out.push_back(LevelCoefficient::from_position(double(levels - 1) * i / (count - 1), levels));
  return out;
}

ModelConfig ablation_config(const ModelConfig& full, const std::string& variant) {
  ModelConfig c = full;
  if (variant == "no-motion-predictor") {
    c.motion_predictor = false;
  } else if (variant == "no-frame-fusion") {
    c.frame_fusion = false;
  } else if (variant != "full") {
    throw std::invalid_argument("unknown ablation variant '" + variant + "'");
  }
  return c;
}

std::vector<AblationEntry> ablation_run(const std::vector<std::vector<Tensor>>& clips,
                                        const std::map<std::string, std::filesystem::path>& checkpoints, int gop,
                                        std::span<const LevelCoefficient> bases) {
  if (!checkpoints.contains("full")) throw std::invalid_argument("ablation_run: no checkpoint for variant 'full'");
  if (clips.empty()) throw std::invalid_argument("ablation_run: no clips");

  struct Swept {
    std::size_t parameters;
    std::vector<RdCurve> curves;  // per clip
    std::vector<std::vector<SweepPoint>> points;  // per clip, in `bases` order
  };
  std::map<std::string, Swept> swept;
  for (const auto& [variant, path] : checkpoints) {
    const Checkpoint ck = load_checkpoint(path);
    Swept s{ck.model->params().parameter_count(), {}, {}};
    for (const auto& clip : clips) {
      s.points.push_back(rd_sweep(*ck.model, clip, gop, bases));
      s.curves.push_back(to_curve(s.points.back(), variant));
    }
    swept.emplace(variant, std::move(s));
  }

  const Swept& full = swept.at("full");
  std::vector<AblationEntry> out;
  // "full" first, the variants after it in name order.
  std::vector<std::string> order{"full"};
  for (const auto& [variant, s] : swept)
    if (variant != "full") order.push_back(variant);
  for (const std::string& variant : order) {
    const Swept& s = swept.at(variant);
    AblationEntry e;
    e.variant = variant;
    e.parameters = s.parameters;
    e.parameter_delta = static_cast<std::int64_t>(s.parameters) - static_cast<std::int64_t>(full.parameters);
    e.curve.label = variant;
    for (std::size_t c = 0; c < clips.size(); ++c) {
      try {
        e.bd_rate += bd_rate(full.curves[c], s.curves[c]).percent;
        ++e.clips_compared;
      } catch (const BdRateError&) {
      }
      for (std::size_t k = 0; k < bases.size(); ++k)
        e.psnr_delta += s.points[c][k].psnr - full.points[c][k].psnr;
    }
    e.bd_rate = e.clips_compared == 0 ? std::numeric_limits<double>::quiet_NaN()
                                      : e.bd_rate / static_cast<double>(e.clips_compared);
    e.psnr_delta /= static_cast<double>(clips.size() * bases.size());
    for (std::size_t k = 0; k < bases.size(); ++k) {
      RdPoint mean;
      for (const auto& clip : s.points) {
        mean.rate += clip[k].bpp;
        mean.psnr += clip[k].psnr;
      }
      mean.rate /= static_cast<double>(s.points.size());
      mean.psnr /= static_cast<double>(s.points.size());
      e.curve.points.push_back(mean);
    }
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json ablation_to_json(std::span<const AblationEntry> entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const AblationEntry& e : entries) {
    nlohmann::json curve = nlohmann::json::array();
    for (const RdPoint& p : e.curve.points) curve.push_back({{"bpp", p.rate}, {"psnr", p.psnr}});
    j.push_back({{"variant", e.variant},
                 {"parameters", e.parameters},
                 {"parameter_delta", e.parameter_delta},
                 {"bd_rate", std::isnan(e.bd_rate) ? nlohmann::json() : nlohmann::json(e.bd_rate)},
                 {"clips_compared", e.clips_compared},
                 {"psnr_delta", e.psnr_delta},
                 {"curve", curve}});
  }
  return j;
}

}  // namespace lhbvc
