// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lhbvc/optim.hpp"
#include "lhbvc/transforms.hpp"

namespace lhbvc {

struct TrainConfig {
  std::vector<double> lambdas{0.0067, 0.025, 0.048, 0.093};
  int batch_size = 4;
  int patch_size = 64;
  std::int64_t iterations = 10000;
  double learning_rate = 1e-4;
  std::int64_t patience = 1000;  // iterations without a new best smoothed loss
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  /// D = distortion_scale * MSE with pixels in [0, 1]. The default expresses
  /// D in 8-bit units, the scale the default lambdas are tuned for.
  double distortion_scale = 255.0 * 255.0;
  /// One uniformly drawn level per step instead of the sum over all levels.
  bool sample_levels = false;
  /// Weight of the keyframe rate-distortion terms; 0 trains B-frames only.
  double intra_weight = 1.0;
  /// Exponential smoothing factor of the loss used for plateau detection.
  double smoothing = 0.99;

  /// Throws std::invalid_argument for non-increasing or non-positive lambdas
  /// and out-of-range sizes.
  void validate() const;
};

/// The defaults adjusted to fit the 10k-step budget on one CPU core: a
/// larger learning rate and one sampled level per step.
TrainConfig desk_train_config();

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// sum_n (lambda_n * D_n + R_n).
double rd_loss(std::span<const double> distortions, std::span<const double> rates, std::span<const double> lambdas);
Tensor rd_loss(std::span<const Tensor> distortions, std::span<const Tensor> rates, std::span<const double> lambdas);

/// Patches [B,3,P,P] in [0,1]. `flow_to_future` is the ground-truth
/// displacement from the current frame to the future one when the source
/// knows it (diagnostics only).
struct TripletBatch {
  Tensor past;
  Tensor current;
  Tensor future;
  Tensor flow_to_future;

  void validate() const;
};

/// Produces batch `index`. Sources are pure functions of the index, which
/// makes training resumable without data-loader state.
using TripletSource = std::function<TripletBatch(std::int64_t index)>;

struct LevelStats {
  int level = 0;
  double loss = 0.0;  // lambda * D + R
  double mse = 0.0;
  double bpp = 0.0;   // estimated, all chunks
  double motion_bpp = 0.0;
  double residual_bpp = 0.0;
};

struct StepStats {
  double loss = 0.0;
  std::vector<LevelStats> bframe;  // levels trained this step
  std::vector<LevelStats> intra;   // empty when intra_weight is 0
  double grad_norm = 0.0;          // before clipping
  double clip_scale = 1.0;         // <= 1
};

/// Non-finite loss or gradient; names the level and term.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int level, const std::string& term, const std::string& what)
      : std::runtime_error(what), level_(level), term_(term) {}
  int level() const { return level_; }
  const std::string& term() const { return term_; }

 private:
  int level_;
  std::string term_;
};

/// One optimization step: the B-frame model at every level (or one sampled
/// level), the keyframe model likewise, the summed rate-distortion loss,
/// gradient clipping and an Adam update. `rng` drives quantization noise and level sampling.
StepStats train_step(Model& model, Adam& optimizer, const TripletBatch& batch, const TrainConfig& cfg, Rng& rng);

struct TrainProgress {
  std::int64_t iteration = 0;  // steps completed
  double learning_rate = 0.0;
  double smoothed_loss = 0.0;
  double best_loss = 0.0;
  std::int64_t since_best = 0;
  int plateau_events = 0;
  double wall_seconds = 0.0;  // accumulated across resumes
};

/// Learning-rate rule: halve after `patience` updates without a new best
/// smoothed loss. Returns true when it halved.
bool update_plateau(TrainProgress& p, double loss, const TrainConfig& cfg);

struct LoopOptions {
  std::filesystem::path checkpoint;  // written periodically and at the end; empty disables
  std::int64_t checkpoint_every = 1000;
  std::filesystem::path log;  // CSV, appended; empty disables
  std::function<void(const StepStats&, const TrainProgress&)> on_step;
};

/// Owns the model, the optimizer and the schedule state.
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& cfg);
  /// Restores everything a checkpoint written by save() holds.
  static Trainer resume(const std::filesystem::path& checkpoint);

  /// Runs until `cfg.iterations` steps are done (or `until`, if smaller).
  void run(const TripletSource& source, const LoopOptions& options, std::int64_t until = -1);
  StepStats step(const TripletBatch& batch);
  void save(const std::filesystem::path& path) const;

  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  Adam& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return cfg_; }
  const TrainProgress& progress() const { return progress_; }

 private:
  Trainer(std::unique_ptr<Model> model, const TrainConfig& cfg);

  std::unique_ptr<Model> model_;
  TrainConfig cfg_;
  Adam optimizer_;
  TrainProgress progress_;
};

/// CSV header of the training log for `levels` rate levels.
std::string training_log_header(int levels);

// --- data ------------------------------------------------------------------

enum class PatternFamily { kSinusoid, kRectangles, kAffineNoise, kMixed };

struct SynthSpec {
  PatternFamily family = PatternFamily::kMixed;
  double min_motion = 0.0;  // displacement past -> future, pixels
  double max_motion = 8.0;
  double max_affine = 0.05;  // largest linear deformation past -> future (kAffineNoise)
  std::optional<double> direction;  // motion direction in radians; random when unset
  int batch_size = 4;
  int patch_size = 64;
};

/// Deterministic in (spec, seed, index). The current frame is the exact
/// temporal midpoint of the motion between past and future.
TripletBatch synth_triplets(const SynthSpec& spec, std::uint64_t seed, std::int64_t index);
TripletSource synth_source(const SynthSpec& spec, std::uint64_t seed);

/// Frames of a single synthetic clip of `frames` frames with constant motion.
std::vector<Tensor> synth_clip(PatternFamily family, int frames, int height, int width, double speed,
                               std::uint64_t seed);

/// Reads <root>/<clip>/frame_{0,1,2}.raw (interleaved RGB8) with meta.json.
/// Clips that cannot be read, or are smaller than the patch, are skipped
/// with a warning; no usable clip is an error.
class TripletDataset {
 public:
  TripletDataset(const std::filesystem::path& root, int patch_size, int batch_size, std::uint64_t seed);

  std::size_t size() const { return clips_.size(); }
  const std::vector<std::string>& skipped() const { return skipped_; }
  /// Batch `index`: clips in a per-epoch seeded shuffle, random crops.
  TripletBatch batch(std::int64_t index) const;
  TripletSource source() const;

 private:
  struct Clip {
    std::string name;
    int width = 0;
    int height = 0;
    std::vector<std::vector<std::uint8_t>> frames;  // three, interleaved RGB
  };
  std::vector<Clip> clips_;
  std::vector<std::string> skipped_;
  int patch_;
  int batch_;
  std::uint64_t seed_;
};

/// Writes a triplet in the dataset layout (values rounded to 8 bits).
void write_triplet(const std::filesystem::path& clip_dir, const Tensor& past, const Tensor& current,
                   const Tensor& future);

}  // namespace lhbvc
