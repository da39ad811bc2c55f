// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lhbvc/codec.hpp"

namespace lhbvc {

// --- metrics -----------------------------------------------------------------

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) of one frame pair, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
/// Mean of the per-frame PSNRs.
double psnr(std::span<const Tensor> a, std::span<const Tensor> b, double peak = 1.0);

struct RdPoint {
  double rate = 0.0;  // bits per pixel
  double psnr = 0.0;  // dB
};

struct RdCurve {
  std::string label;
  std::vector<RdPoint> points;

  /// Sorts by rate. Throws std::invalid_argument on nonpositive or repeated
  /// rates and non-finite values.
  void normalize();
};

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes) of
/// strictly increasing knots, or the piecewise linear one. Outside the knots
/// it extrapolates the end pieces.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y, bool linear = false);
  double operator()(double x) const;
  /// Exact integral over [a, b].
  double integral(double a, double b) const;
  double min_x() const { return x_.front(); }
  double max_x() const { return x_.back(); }

 private:
  std::size_t segment(double x) const;
  double segment_integral(std::size_t i, double a, double b) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> d_;  // slopes at the knots
  bool linear_;
};

class BdRateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BdRate {
  double percent = 0.0;        // negative: the test curve saves bits
  double log_rate_delta = 0.0; // mean log10(rate_test / rate_anchor)
  double psnr_low = 0.0;       // overlap interval
  double psnr_high = 0.0;
  bool linear = false;         // fewer than 4 points on a curve: piecewise linear fits
};

/// Fits log10(rate) over PSNR for both curves and averages the difference on
/// the common PSNR interval. PSNR must be strictly increasing with rate on
/// each curve. Throws BdRateError("no overlap") for disjoint PSNR ranges and
/// on curves of fewer than 2 points.
BdRate bd_rate(const RdCurve& anchor, const RdCurve& test);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// --- curve files -------------------------------------------------------------

/// "rate,psnr" header then one point per line; extra columns are ignored.
void write_curve_csv(const std::filesystem::path& path, const RdCurve& curve);
RdCurve read_curve_csv(const std::filesystem::path& path);

// --- sweeps ------------------------------------------------------------------

struct LevelBits {
  int level = 0;  // hierarchy level, 0 for keyframes
  int frames = 0;
  double mean_bits = 0.0;
};

struct SweepPoint {
  LevelCoefficient base;
  double bpp = 0.0;
  double psnr = 0.0;
  std::vector<LevelBits> levels;
};

/// Encodes `frames` at every base coefficient with the hierarchical schedule.
std::vector<SweepPoint> rd_sweep(const Model& m, const std::vector<Tensor>& frames, int gop,
                                 std::span<const LevelCoefficient> bases);
/// Mean bits per frame of each hierarchy level.
std::vector<LevelBits> level_bits(std::span<const FrameStats> stats);

/// Rate-ordered curve of the sweep points.
RdCurve to_curve(std::span<const SweepPoint> points, const std::string& label);
/// Columns pair,fraction,position,bpp,psnr.
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepPoint> points);
nlohmann::json sweep_to_json(std::span<const SweepPoint> points);

/// Evenly spaced base coefficients from the lowest to the highest trained level.
std::vector<LevelCoefficient> sweep_coefficients(int levels, int count);

// --- ablations ---------------------------------------------------------------

struct AblationEntry {
  std::string variant;
  std::size_t parameters = 0;
  std::int64_t parameter_delta = 0;  // vs full
  double bd_rate = 0.0;              // percent vs full, mean over the compared clips
  std::size_t clips_compared = 0;    // clips whose curves overlap the full model's
  double psnr_delta = 0.0;           // dB vs full at the same coefficients, mean over all clips
  RdCurve curve;                     // mean over clips
};

/// `checkpoints` maps variant names to checkpoint paths and must contain
/// "full". Every clip is swept at `bases`; BD-BR is computed per clip against
/// the full model and averaged over the clips where the PSNR ranges overlap.
/// With no overlapping clip bd_rate is NaN. Throws std::invalid_argument when
/// "full" is missing.
std::vector<AblationEntry> ablation_run(const std::vector<std::vector<Tensor>>& clips,
                                        const std::map<std::string, std::filesystem::path>& checkpoints, int gop,
                                        std::span<const LevelCoefficient> bases);
nlohmann::json ablation_to_json(std::span<const AblationEntry> entries);

/// Model config of an ablation variant: "full", "no-motion-predictor" or
/// "no-frame-fusion".
ModelConfig ablation_config(const ModelConfig& full, const std::string& variant);

// --- video files ---------------------------------------------------------------

class VideoIoError : public std::runtime_error {
 public:
  VideoIoError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct Video {
  int width = 0;
  int height = 0;
  std::vector<Tensor> frames;  // [1,3,H,W] RGB in [0,1]
};

/// YUV4MPEG2 with 4:2:0 (C420, C420jpeg, C420paldv, C420mpeg2) or 4:4:4
/// chroma, 8-bit. Converted to RGB with full-range BT.601.
Video read_y4m(const std::filesystem::path& path);
/// 4:2:0 output; chroma is the mean of each 2x2 block.
void write_y4m(const std::filesystem::path& path, const std::vector<Tensor>& frames, int fps = 25);

/// Planar RGB8: per frame the R, G and B planes, row-major.
Video read_raw_rgb(const std::filesystem::path& path, int width, int height);
void write_raw_rgb(const std::filesystem::path& path, const std::vector<Tensor>& frames);

/// Dispatch on the extension: ".y4m" or raw otherwise (raw needs a size).
Video read_video(const std::filesystem::path& path, int width = 0, int height = 0);
void write_video(const std::filesystem::path& path, const std::vector<Tensor>& frames);

/// Byte value of a normalized sample: clamp, scale, round half away from zero.
std::uint8_t to_u8(double v);

}  // namespace lhbvc
