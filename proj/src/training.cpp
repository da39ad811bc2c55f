// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/training.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lhbvc/checkpoint.hpp"
#include "lhbvc/ops.hpp"
#include "lhbvc/pipeline.hpp"

namespace lhbvc {

void TrainConfig::validate() const {
  if (lambdas.empty()) throw std::invalid_argument("TrainConfig: no lambdas");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || !std::isfinite(lambdas[i]))
      throw std::invalid_argument("TrainConfig: lambdas must be positive");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
      throw std::invalid_argument("TrainConfig: lambdas must be strictly increasing");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (patch_size < 1) throw std::invalid_argument("TrainConfig: patch_size must be positive");
  if (iterations < 0) throw std::invalid_argument("TrainConfig: negative iteration budget");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be positive");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip_norm must be positive");
  if (!(distortion_scale > 0.0)) throw std::invalid_argument("TrainConfig: distortion_scale must be positive");
  if (!(intra_weight >= 0.0)) throw std::invalid_argument("TrainConfig: intra_weight must be non-negative");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw std::invalid_argument("TrainConfig: smoothing must be in [0, 1)");
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.sample_levels = true;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambdas", c.lambdas},
          {"batch_size", c.batch_size},
          {"patch_size", c.patch_size},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"distortion_scale", c.distortion_scale},
          {"sample_levels", c.sample_levels},
          {"intra_weight", c.intra_weight},
          {"smoothing", c.smoothing}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lambdas") c.lambdas = value.get<std::vector<double>>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "patch_size") c.patch_size = value.get<int>();
    else if (key == "iterations") c.iterations = value.get<std::int64_t>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "patience") c.patience = value.get<std::int64_t>();
    else if (key == "clip_norm") c.clip_norm = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "distortion_scale") c.distortion_scale = value.get<double>();
    else if (key == "sample_levels") c.sample_levels = value.get<bool>();
    else if (key == "intra_weight") c.intra_weight = value.get<double>();
    else if (key == "smoothing") c.smoothing = value.get<double>();
    else throw std::invalid_argument("train config: unknown key \"" + key + "\"");
  }
  c.validate();
  return c;
}

namespace {

void require_lengths(std::size_t d, std::size_t r, std::size_t l) {
  if (d != r || d != l) {
    throw std::invalid_argument("rd_loss: " + std::to_string(d) + " distortions, " + std::to_string(r) + " rates, " +
                                std::to_string(l) + " lambdas");
  }
}

}  // namespace

double rd_loss(std::span<const double> distortions, std::span<const double> rates, std::span<const double> lambdas) {
  require_lengths(distortions.size(), rates.size(), lambdas.size());
  double total = 0.0;
  for (std::size_t n = 0; n < lambdas.size(); ++n) total += lambdas[n] * distortions[n] + rates[n];
  return total;
}

Tensor rd_loss(std::span<const Tensor> distortions, std::span<const Tensor> rates, std::span<const double> lambdas) {
  require_lengths(distortions.size(), rates.size(), lambdas.size());
  if (lambdas.empty()) return Tensor(Shape{});
  Tensor total;
  for (std::size_t n = 0; n < lambdas.size(); ++n) {
    const Tensor term = add(scale(distortions[n], lambdas[n]), rates[n]);
    total = n == 0 ? term : add(total, term);
  }
  return total;
}

void TripletBatch::validate() const {
  if (past.rank() != 4 || past.dim(1) != 3)
    throw std::invalid_argument("TripletBatch: frames must be [B,3,P,P], got " + shape_string(past.shape()));
  if (current.shape() != past.shape() || future.shape() != past.shape())
    throw std::invalid_argument("TripletBatch: frame shapes differ");
  for (const Tensor* t : {&past, &current, &future})
    for (double v : t->values())
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("TripletBatch: values outside [0, 1]");
}

namespace {

void require_finite(double v, int level, const char* term, const char* frame) {
  if (std::isfinite(v)) return;
  throw TrainingDiverged(level, term,
                         std::string("non-finite ") + term + " in the " + frame + " loss at level " +
                             std::to_string(level) + " (value " + std::to_string(v) + ")");
}

}  // namespace

StepStats train_step(Model& model, Adam& optimizer, const TripletBatch& batch, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  batch.validate();
  const int levels = model.config().levels;
  if (static_cast<int>(cfg.lambdas.size()) != levels) {
    throw std::invalid_argument("train_step: " + std::to_string(cfg.lambdas.size()) + " lambdas for a model with " +
                                std::to_string(levels) + " levels");
  }
  std::vector<int> trained;
  if (cfg.sample_levels) {
    trained.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(levels))));
  } else {
    for (int n = 0; n < levels; ++n) trained.push_back(n);
  }
  const double pixels = double(batch.current.dim(0)) * double(batch.current.dim(2)) * double(batch.current.dim(3));

  StepStats stats;
  model.params().zero_grad();
  Tape tape;
  Tensor loss;
  {
    Tape::Recording recording(tape);
    const BFramePrefix prefix = bframe_prefix(model, batch.current, batch.past, batch.future);
    std::vector<Tensor> d, r;
    std::vector<double> lambdas;
    for (int n : trained) {
      const BFrameResult res =
          bframe_forward(model, prefix, LevelCoefficient::at_level(n), QuantizeMode::kTrain, rng);
      const Tensor distortion = mse(res.reconstruction, batch.current);
      const Tensor motion_bits = add(res.motion.latent_bits, res.motion.hyper_bits);
      const Tensor residual_bits = add(res.residual.latent_bits, res.residual.hyper_bits);
      LevelStats s;
      s.level = n;
      s.mse = distortion[0];
      s.motion_bpp = motion_bits[0] / pixels;
      s.residual_bpp = residual_bits[0] / pixels;
      s.bpp = s.motion_bpp + s.residual_bpp;
      require_finite(s.mse, n, "distortion", "B-frame");
      require_finite(s.motion_bpp, n, "motion rate", "B-frame");
      require_finite(s.residual_bpp, n, "residual rate", "B-frame");
      s.loss = cfg.lambdas[static_cast<std::size_t>(n)] * cfg.distortion_scale * s.mse + s.bpp;
      stats.bframe.push_back(s);
      d.push_back(scale(distortion, cfg.distortion_scale));
      r.push_back(scale(add(motion_bits, residual_bits), 1.0 / pixels));
      lambdas.push_back(cfg.lambdas[static_cast<std::size_t>(n)]);
    }
    loss = rd_loss(d, r, lambdas);

    if (cfg.intra_weight > 0.0) {
      std::vector<Tensor> di, ri;
      for (int n : trained) {
        const IntraResult res = intra_forward(model, batch.current, LevelCoefficient::at_level(n), QuantizeMode::kTrain, rng);
        const Tensor distortion = mse(res.reconstruction, batch.current);
        const Tensor bits = add(res.bottleneck.latent_bits, res.bottleneck.hyper_bits);
        LevelStats s;
        s.level = n;
        s.mse = distortion[0];
        s.bpp = bits[0] / pixels;
        require_finite(s.mse, n, "distortion", "keyframe");
        require_finite(s.bpp, n, "rate", "keyframe");
        s.loss = cfg.lambdas[static_cast<std::size_t>(n)] * cfg.distortion_scale * s.mse + s.bpp;
        stats.intra.push_back(s);
        di.push_back(scale(distortion, cfg.distortion_scale));
        ri.push_back(scale(bits, 1.0 / pixels));
      }
      loss = add(loss, scale(rd_loss(di, ri, lambdas), cfg.intra_weight));
    }
  }
  stats.loss = loss[0];
  require_finite(stats.loss, -1, "total", "summed");
  backprop(tape, loss);

  std::vector<Tensor> params = model.params().tensors();
  stats.grad_norm = global_grad_norm(params);
  if (!std::isfinite(stats.grad_norm)) {
    throw TrainingDiverged(-1, "gradient", "non-finite gradient norm (loss " + std::to_string(stats.loss) + ")");
  }
  stats.clip_scale = clip_global_grad_norm(params, cfg.clip_norm);
  optimizer.step(params);
  return stats;
}

bool update_plateau(TrainProgress& p, double loss, const TrainConfig& cfg) {
  if (p.iteration == 0) {
    p.smoothed_loss = loss;
    p.best_loss = loss;
    p.since_best = 0;
    return false;
  }
  p.smoothed_loss = cfg.smoothing * p.smoothed_loss + (1.0 - cfg.smoothing) * loss;
  if (p.smoothed_loss < p.best_loss) {
    p.best_loss = p.smoothed_loss;
    p.since_best = 0;
    return false;
  }
  if (++p.since_best < cfg.patience) return false;
  p.learning_rate *= 0.5;
  p.best_loss = p.smoothed_loss;
  p.since_best = 0;
  ++p.plateau_events;
  return true;
}

// --- trainer -----------------------------------------------------------------

namespace {

nlohmann::json progress_json(const TrainProgress& p) {
  return {{"iteration", p.iteration},       {"learning_rate", p.learning_rate}, {"smoothed_loss", p.smoothed_loss},
          {"best_loss", p.best_loss},       {"since_best", p.since_best},       {"plateau_events", p.plateau_events},
          {"wall_seconds", p.wall_seconds}};
}

TrainProgress progress_from_json(const nlohmann::json& j) {
  TrainProgress p;
  p.iteration = j.at("iteration").get<std::int64_t>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.smoothed_loss = j.at("smoothed_loss").get<double>();
  p.best_loss = j.at("best_loss").get<double>();
  p.since_best = j.at("since_best").get<std::int64_t>();
  p.plateau_events = j.at("plateau_events").get<int>();
  p.wall_seconds = j.at("wall_seconds").get<double>();
  return p;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

Trainer::Trainer(const ModelConfig& model, const TrainConfig& cfg)
    : Trainer(std::make_unique<Model>(model), cfg) {}

Trainer::Trainer(std::unique_ptr<Model> model, const TrainConfig& cfg)
    : model_(std::move(model)), cfg_(cfg), optimizer_(AdamConfig{cfg.learning_rate}) {
  cfg_.validate();
  if (static_cast<int>(cfg_.lambdas.size()) != model_->config().levels) {
    throw std::invalid_argument("Trainer: " + std::to_string(cfg_.lambdas.size()) + " lambdas for " +
                                std::to_string(model_->config().levels) + " model levels");
  }
  if (cfg_.patch_size % model_->config().alignment() != 0) {
    throw std::invalid_argument("Trainer: patch size " + std::to_string(cfg_.patch_size) +
                                " is not a multiple of the model alignment " +
                                std::to_string(model_->config().alignment()));
  }
  progress_.learning_rate = cfg_.learning_rate;
}

Trainer Trainer::resume(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.metadata.contains("train_config") || !ck.metadata.contains("progress") || !ck.has_optimizer)
    throw CheckpointError(path.string() + ": not a training checkpoint");
  Trainer t(std::move(ck.model), train_config_from_json(ck.metadata.at("train_config")));
  t.progress_ = progress_from_json(ck.metadata.at("progress"));
  t.optimizer_.restore(ck.optimizer_steps, std::move(ck.first_moments), std::move(ck.second_moments));
  t.optimizer_.set_learning_rate(t.progress_.learning_rate);
  return t;
}

StepStats Trainer::step(const TripletBatch& batch) {
  Rng rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(progress_.iteration)));
  optimizer_.set_learning_rate(progress_.learning_rate);
  StepStats stats = train_step(*model_, optimizer_, batch, cfg_, rng);
  if (update_plateau(progress_, stats.loss, cfg_)) {
    spdlog::info("iteration {}: no improvement for {} steps, learning rate now {}", progress_.iteration + 1,
                 cfg_.patience, progress_.learning_rate);
  }
  ++progress_.iteration;
  return stats;
}

void Trainer::save(const std::filesystem::path& path) const {
  const nlohmann::json meta = {{"train_config", to_json(cfg_)}, {"progress", progress_json(progress_)}};
  save_checkpoint(path, *model_, meta, &optimizer_);
}

std::string training_log_header(int levels) {
  std::string h = "iteration,loss";
  for (int n = 1; n <= levels; ++n) h += ",D_" + std::to_string(n);
  for (int n = 1; n <= levels; ++n) h += ",bpp_" + std::to_string(n);
  return h + ",lr";
}

void Trainer::run(const TripletSource& source, const LoopOptions& options, std::int64_t until) {
  const std::int64_t end = until < 0 ? cfg_.iterations : std::min(until, cfg_.iterations);
  const int levels = model_->config().levels;
  std::ofstream log;
  if (!options.log.empty()) {
    const bool fresh = !std::filesystem::exists(options.log) || std::filesystem::file_size(options.log) == 0;
    log.open(options.log, std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log " + options.log.string());
    if (fresh) log << training_log_header(levels) << '\n';
  }
  while (progress_.iteration < end) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = progress_.learning_rate;
    const StepStats stats = step(source(progress_.iteration));
    progress_.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log.is_open()) {
      std::vector<std::string> d(static_cast<std::size_t>(levels)), bpp(static_cast<std::size_t>(levels));
      for (const auto& s : stats.bframe) {
        d[static_cast<std::size_t>(s.level)] = format_double(s.mse);
        bpp[static_cast<std::size_t>(s.level)] = format_double(s.bpp);
      }
      log << progress_.iteration << ',' << format_double(stats.loss);
      for (const auto& v : d) log << ',' << v;
      for (const auto& v : bpp) log << ',' << v;
      log << ',' << format_double(lr) << '\n';
      if (!log) throw std::runtime_error("write to training log " + options.log.string() + " failed");
    }
    if (options.on_step) options.on_step(stats, progress_);
    if (!options.checkpoint.empty() && options.checkpoint_every > 0 &&
        progress_.iteration % options.checkpoint_every == 0 && progress_.iteration < end) {
      save(options.checkpoint);
    }
  }
  if (log.is_open()) log.flush();
  if (!options.checkpoint.empty()) save(options.checkpoint);
}

}  // namespace lhbvc
