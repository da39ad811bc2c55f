// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lhbvc/training.hpp"

namespace lhbvc {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::uint8_t to_byte(double v) {
  // Round half away from zero; values are non-negative after clamping.
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

}  // namespace

TripletDataset::TripletDataset(const std::filesystem::path& root, int patch_size, int batch_size, std::uint64_t seed)
    : patch_(patch_size), batch_(batch_size), seed_(seed) {
  if (patch_size < 1 || batch_size < 1) throw std::invalid_argument("TripletDataset: empty patches or batches");
  if (!std::filesystem::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const std::string name = dir.filename().string();
    try {
      std::ifstream meta_in(dir / "meta.json");
      if (!meta_in) throw std::runtime_error("missing meta.json");
      const auto meta = nlohmann::json::parse(meta_in);
      Clip clip;
      clip.name = name;
      clip.width = meta.at("width").get<int>();
      clip.height = meta.at("height").get<int>();
      if (meta.at("channels").get<int>() != 3 || meta.at("bitdepth").get<int>() != 8)
        throw std::runtime_error("only 3-channel 8-bit clips are supported");
      if (clip.width < patch_ || clip.height < patch_)
        throw std::runtime_error(std::to_string(clip.width) + "x" + std::to_string(clip.height) +
                                 " is smaller than the patch size");
      const std::size_t expected = std::size_t(clip.width) * std::size_t(clip.height) * 3;
      for (int k = 0; k < 3; ++k) {
        const auto path = dir / ("frame_" + std::to_string(k) + ".raw");
        auto bytes = read_file(path);
        if (bytes.size() != expected)
          throw std::runtime_error(path.filename().string() + " holds " + std::to_string(bytes.size()) +
                                   " bytes, expected " + std::to_string(expected));
        clip.frames.push_back(std::move(bytes));
      }
      clips_.push_back(std::move(clip));
    } catch (const std::exception& e) {
      spdlog::warn("skipping clip {}: {}", name, e.what());
      skipped_.push_back(name);
    }
  }
  if (clips_.empty()) throw std::runtime_error("no usable triplets under " + root.string());
}

TripletBatch TripletDataset::batch(std::int64_t index) const {
  const std::int64_t n = static_cast<std::int64_t>(clips_.size()), p = patch_, plane = p * p;
  TripletBatch out{Tensor({batch_, 3, p, p}), Tensor({batch_, 3, p, p}), Tensor({batch_, 3, p, p}), Tensor()};
  Tensor* frames[3] = {&out.past, &out.current, &out.future};
  std::int64_t cached_epoch = -1;
  std::vector<std::int64_t> order;
  for (std::int64_t i = 0; i < batch_; ++i) {
    const std::int64_t g = index * batch_ + i, epoch = g / n;
    if (epoch != cached_epoch) {
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle(mix_seed(seed_, static_cast<std::uint64_t>(epoch)));
      for (std::int64_t k = n - 1; k > 0; --k)
        std::swap(order[static_cast<std::size_t>(k)],
                  order[static_cast<std::size_t>(shuffle.below(static_cast<std::uint64_t>(k + 1)))]);
      cached_epoch = epoch;
    }
    const Clip& clip = clips_[static_cast<std::size_t>(order[static_cast<std::size_t>(g % n)])];
    Rng crop(mix_seed(~seed_, static_cast<std::uint64_t>(g)));
    const auto x0 = static_cast<std::int64_t>(crop.below(static_cast<std::uint64_t>(clip.width - patch_ + 1)));
    const auto y0 = static_cast<std::int64_t>(crop.below(static_cast<std::uint64_t>(clip.height - patch_ + 1)));
    for (int k = 0; k < 3; ++k) {
      double* dst = frames[k]->mutable_values().data() + i * 3 * plane;
      const auto& src = clip.frames[static_cast<std::size_t>(k)];
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < p; ++y)
          for (std::int64_t x = 0; x < p; ++x)
            dst[c * plane + y * p + x] =
                src[static_cast<std::size_t>(((y0 + y) * clip.width + (x0 + x)) * 3 + c)] / 255.0;
    }
  }
  return out;
}

TripletSource TripletDataset::source() const {
  return [this](std::int64_t index) { return batch(index); };
}

void write_triplet(const std::filesystem::path& clip_dir, const Tensor& past, const Tensor& current,
                   const Tensor& future) {
  if (past.rank() != 4 || past.dim(0) != 1 || past.dim(1) != 3 || current.shape() != past.shape() ||
      future.shape() != past.shape())
    throw std::invalid_argument("write_triplet: frames must share a [1,3,H,W] shape");
  std::filesystem::create_directories(clip_dir);
  const std::int64_t h = past.dim(2), w = past.dim(3), plane = h * w;
  const Tensor* frames[3] = {&past, &current, &future};
  for (int k = 0; k < 3; ++k) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(plane * 3));
    const auto v = frames[k]->values();
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < plane; ++i)
        bytes[static_cast<std::size_t>(i * 3 + c)] = to_byte(v[static_cast<std::size_t>(c * plane + i)]);
    std::ofstream out(clip_dir / ("frame_" + std::to_string(k) + ".raw"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + (clip_dir / ("frame_" + std::to_string(k) + ".raw")).string());
  }
  std::ofstream meta(clip_dir / "meta.json");
  meta << nlohmann::json{{"width", w}, {"height", h}, {"channels", 3}, {"bitdepth", 8}}.dump() << '\n';
  if (!meta) throw std::runtime_error("cannot write " + (clip_dir / "meta.json").string());
}

}  // namespace lhbvc
