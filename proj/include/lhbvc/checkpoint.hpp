// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "lhbvc/optim.hpp"
#include "lhbvc/transforms.hpp"

namespace lhbvc {

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File layout (little-endian):
///   "LHBC" u32 version
///   u32 n, n bytes of model-config JSON
///   u32 n, n bytes of metadata JSON
///   u32 count, then per tensor: u16 name length, name, u8 rank, rank x i64,
///     numel x f64                                      (model parameters)
///   u32 count, same records                             (optimizer moments)
///   i64 optimizer step count
struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata = nlohmann::json::object();
  std::unique_ptr<Model> model;
  // Present when the file carries optimizer state.
  bool has_optimizer = false;
  std::int64_t optimizer_steps = 0;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& metadata = {},
                     const Adam* optimizer = nullptr);
/// Throws CheckpointError on I/O failure, bad magic or version, or a
/// parameter list that disagrees with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace lhbvc
