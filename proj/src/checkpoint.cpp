// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "lhbvc/byte_io.hpp"

namespace lhbvc {

using nlohmann::json;

namespace {

json unet_json(const UNetConfig& c) { return {{"depth", c.depth}, {"base", c.base}, {"in", c.in}, {"out", c.out}}; }

json ae_json(const AutoencoderConfig& c) {
  return {{"latent", c.latent}, {"hyper", c.hyper},   {"stages", c.stages},
          {"res_blocks", c.res_blocks}, {"hidden", c.hidden}, {"in", c.in},
          {"out", c.out}, {"zero_init_output", c.zero_init_output}, {"gain_init", c.gain_init},
          {"hyper_gain_init", c.hyper_gain_init}};
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw std::invalid_argument("model config: unknown key '" + k + "' in " + where);
  }
}

UNetConfig unet_from(const json& j, UNetConfig c, const char* where) {
  reject_unknown(j, {"depth", "base", "in", "out"}, where);
  read_key(j, "depth", c.depth);
  read_key(j, "base", c.base);
  read_key(j, "in", c.in);
  read_key(j, "out", c.out);
  return c;
}

AutoencoderConfig ae_from(const json& j, AutoencoderConfig c, const char* where) {
  reject_unknown(j,
                 {"latent", "hyper", "stages", "res_blocks", "hidden", "in", "out", "zero_init_output", "gain_init",
                  "hyper_gain_init"},
                 where);
  read_key(j, "latent", c.latent);
  read_key(j, "hyper", c.hyper);
  read_key(j, "stages", c.stages);
  read_key(j, "res_blocks", c.res_blocks);
  read_key(j, "hidden", c.hidden);
  read_key(j, "in", c.in);
  read_key(j, "out", c.out);
  read_key(j, "zero_init_output", c.zero_init_output);
  read_key(j, "gain_init", c.gain_init);
  read_key(j, "hyper_gain_init", c.hyper_gain_init);
  return c;
}

void write_tensor_list(ByteWriter& w, const std::vector<std::pair<std::string, const std::vector<double>*>>& items,
                       const std::vector<Shape>& shapes) {
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [name, data] = items[i];
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(shapes[i].size()));
    for (auto d : shapes[i]) w.i64(d);
    for (double v : *data) w.f64(v);
  }
}

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

std::vector<NamedArray> read_tensor_list(ByteReader& r) {
  const std::uint32_t n = r.u32();
  std::vector<NamedArray> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedArray a;
    a.name = r.string(r.u16());
    const std::uint8_t rank = r.u8();
    for (std::uint8_t k = 0; k < rank; ++k) {
      const std::int64_t d = r.i64();
      if (d < 0 || d > (std::int64_t{1} << 32)) throw CheckpointError("checkpoint: bad extent for " + a.name);
      a.shape.push_back(d);
    }
    const std::size_t numel = shape_numel(a.shape);
    if (numel * 8 > r.remaining()) throw CheckpointError("checkpoint: truncated tensor " + a.name);
    a.data.resize(numel);
    for (double& v : a.data) v = r.f64();
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"levels", c.levels},
          {"motion_unet", unet_json(c.motion_unet)},
          {"fusion_unet", unet_json(c.fusion_unet)},
          {"motion", ae_json(c.motion)},
          {"residual", ae_json(c.residual)},
          {"intra", ae_json(c.intra)},
          {"motion_predictor", c.motion_predictor},
          {"frame_fusion", c.frame_fusion},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"levels", "motion_unet", "fusion_unet", "motion", "residual", "intra", "motion_predictor",
                     "frame_fusion", "seed"},
                 "model");
  ModelConfig c;
  read_key(j, "levels", c.levels);
  if (j.contains("motion_unet")) c.motion_unet = unet_from(j.at("motion_unet"), c.motion_unet, "motion_unet");
  if (j.contains("fusion_unet")) c.fusion_unet = unet_from(j.at("fusion_unet"), c.fusion_unet, "fusion_unet");
  if (j.contains("motion")) c.motion = ae_from(j.at("motion"), c.motion, "motion");
  if (j.contains("residual")) c.residual = ae_from(j.at("residual"), c.residual, "residual");
  if (j.contains("intra")) c.intra = ae_from(j.at("intra"), c.intra, "intra");
  read_key(j, "motion_predictor", c.motion_predictor);
  read_key(j, "frame_fusion", c.frame_fusion);
  read_key(j, "seed", c.seed);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const json& metadata,
                     const Adam* optimizer) {
  ByteWriter w;
  w.bytes("LHBC");
  w.u32(kCheckpointVersion);
  const std::string cfg = to_json(model.config()).dump();
  const std::string meta = (metadata.is_null() ? json::object() : metadata).dump();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);

  const auto& entries = model.params().entries();
  std::vector<std::vector<double>> values;
  std::vector<Shape> shapes;
  values.reserve(entries.size());
  for (const auto& [name, t] : entries) {
    values.emplace_back(t.values().begin(), t.values().end());
    shapes.push_back(t.shape());
  }
  std::vector<std::pair<std::string, const std::vector<double>*>> items;
  for (std::size_t i = 0; i < entries.size(); ++i) items.emplace_back(entries[i].first, &values[i]);
  write_tensor_list(w, items, shapes);

  std::vector<std::pair<std::string, const std::vector<double>*>> moments;
  std::vector<Shape> moment_shapes;
  if (optimizer && !optimizer->first_moments().empty()) {
    if (optimizer->first_moments().size() != entries.size()) {
      throw CheckpointError("save_checkpoint: optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      moments.emplace_back("m." + entries[i].first, &optimizer->first_moments()[i]);
      moment_shapes.push_back(entries[i].second.shape());
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      moments.emplace_back("v." + entries[i].first, &optimizer->second_moments()[i]);
      moment_shapes.push_back(entries[i].second.shape());
    }
  }
  write_tensor_list(w, moments, moment_shapes);
  w.i64(optimizer ? optimizer->steps() : 0);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("save_checkpoint: cannot open " + tmp.string());
    f.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
    if (!f) throw CheckpointError("save_checkpoint: write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("save_checkpoint: cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("load_checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    ByteReader r(bytes);
    if (r.string(4) != "LHBC") throw CheckpointError("load_checkpoint: bad magic in " + path.string());
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError("load_checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.config = model_config_from_json(json::parse(r.string(r.u32())));
    ck.metadata = json::parse(r.string(r.u32()));
    ck.model = std::make_unique<Model>(ck.config);
    const auto params = read_tensor_list(r);
    const auto& entries = ck.model->params().entries();
    if (params.size() != entries.size()) throw CheckpointError("load_checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != entries[i].first || params[i].shape != entries[i].second.shape()) {
        throw CheckpointError("load_checkpoint: parameter " + params[i].name + " does not match " +
                              entries[i].first + " " + shape_string(entries[i].second.shape()));
      }
      Tensor t = entries[i].second;
      std::copy(params[i].data.begin(), params[i].data.end(), t.mutable_values().begin());
    }
    const auto moments = read_tensor_list(r);
    ck.optimizer_steps = r.i64();
    if (!moments.empty()) {
      if (moments.size() != 2 * entries.size()) throw CheckpointError("load_checkpoint: optimizer state mismatch");
      ck.has_optimizer = true;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        ck.first_moments.push_back(moments[i].data);
        ck.second_moments.push_back(moments[entries.size() + i].data);
      }
    }
    if (r.remaining() != 0) throw CheckpointError("load_checkpoint: trailing bytes");
    return ck;
  } catch (const ByteReader::Underflow& e) {
    throw CheckpointError("load_checkpoint: truncated file " + path.string() + " (" + e.what() + ")");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("load_checkpoint: bad JSON block: ") + e.what());
  }
}

}  // namespace lhbvc
