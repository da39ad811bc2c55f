// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>

#include "lhbvc/training.hpp"

namespace lhbvc {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Smooth per-channel pattern defined on the whole plane.
class Texture {
 public:
  virtual ~Texture() = default;
  virtual double value(int c, double x, double y) const = 0;
};

class SinusoidTexture : public Texture {
 public:
  SinusoidTexture(Rng& rng, double amplitude) {
    for (int c = 0; c < 3; ++c) base_[c] = rng.uniform(0.3, 0.7);
    for (auto& w : waves_) {
      const double f = rng.uniform(0.02, 0.12), angle = rng.uniform(0.0, kTwoPi);
      w.fx = f * std::cos(angle);
      w.fy = f * std::sin(angle);
      for (int c = 0; c < 3; ++c) {
        w.amp[c] = amplitude * rng.uniform(0.3, 1.0) / double(waves_.size());
        w.phase[c] = rng.uniform(0.0, kTwoPi);
      }
    }
  }
  double value(int c, double x, double y) const override {
    double v = base_[c];
    for (const auto& w : waves_) v += w.amp[c] * std::sin(kTwoPi * (w.fx * x + w.fy * y) + w.phase[c]);
    return v;
  }

 private:
  struct Wave {
    double fx, fy;
    std::array<double, 3> amp, phase;
  };
  std::array<double, 3> base_{};
  std::array<Wave, 3> waves_{};
};

// Two-octave value noise on hashed lattices with smoothstep interpolation.
class NoiseTexture : public Texture {
 public:
  explicit NoiseTexture(Rng& rng) : seed_(rng.next_u64()), cell_(rng.uniform(4.0, 10.0)) {
    for (int c = 0; c < 3; ++c) {
      base_[c] = rng.uniform(0.35, 0.65);
      tint_[c] = rng.uniform(0.2, 0.5);
    }
  }
  double value(int c, double x, double y) const override {
    const double n = 0.7 * octave(x / cell_, y / cell_, 0) + 0.3 * octave(2.0 * x / cell_, 2.0 * y / cell_, 1);
    return base_[c] + tint_[c] * (n - 0.5) * (c == 1 ? -1.0 : 1.0) + 0.1 * (octave(x / cell_, y / cell_, 2 + c) - 0.5);
  }

 private:
  double lattice(std::int64_t i, std::int64_t j, std::uint64_t layer) const {
    const std::uint64_t h = mix_seed(mix_seed(seed_ + layer, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(j));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }
  double octave(double x, double y, std::uint64_t layer) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto i = static_cast<std::int64_t>(fx), j = static_cast<std::int64_t>(fy);
    const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double u = smooth(x - fx), v = smooth(y - fy);
    const double top = (1 - u) * lattice(i, j, layer) + u * lattice(i + 1, j, layer);
    const double bottom = (1 - u) * lattice(i, j + 1, layer) + u * lattice(i + 1, j + 1, layer);
    return (1 - v) * top + v * bottom;
  }

  std::uint64_t seed_;
  double cell_;
  std::array<double, 3> base_{}, tint_{};
};

struct MotionRange {
  double lo = 0.0;
  double hi = 0.0;
  std::optional<double> direction;
};

Vec2 random_motion(Rng& rng, const MotionRange& range) {
  const double m = rng.uniform(range.lo, range.hi), a = rng.uniform(0.0, kTwoPi);
  const double angle = range.direction.value_or(a);
  return {m * std::cos(angle), m * std::sin(angle)};
}

// Length of [a0, a1) inside the pixel footprint [p - 0.5, p + 0.5).
double overlap(double a0, double a1, double p) {
  return std::max(0.0, std::min(a1, p + 0.5) - std::max(a0, p - 0.5));
}

// A scene is a function of position and time; frames sample it at t and flows
// follow its motion model.
class Scene {
 public:
  virtual ~Scene() = default;
  virtual double value(int c, double x, double y, double t) const = 0;
  // Position at time t1 of the scene point seen at (x, y) at time t0.
  virtual Vec2 track(double x, double y, double t0, double t1) const = 0;
};

class TranslatingScene : public Scene {
 public:
  TranslatingScene(std::unique_ptr<Texture> texture, Vec2 v) : texture_(std::move(texture)), v_(v) {}
  double value(int c, double x, double y, double t) const override {
    return texture_->value(c, x - t * v_.x, y - t * v_.y);
  }
  Vec2 track(double x, double y, double t0, double t1) const override {
    return {x + (t1 - t0) * v_.x, y + (t1 - t0) * v_.y};
  }

 private:
  std::unique_ptr<Texture> texture_;
  Vec2 v_;
};

class RectangleScene : public Scene {
 public:
  RectangleScene(Rng& rng, double extent, const MotionRange& range)
      : background_(std::make_unique<SinusoidTexture>(rng, 0.15), random_motion(rng, range)) {
    const int count = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < count; ++k) {
      Rect r;
      r.w = rng.uniform(0.15, 0.45) * extent;
      r.h = rng.uniform(0.15, 0.45) * extent;
      r.x = rng.uniform(-0.1 * extent, extent - 0.5 * r.w);
      r.y = rng.uniform(-0.1 * extent, extent - 0.5 * r.h);
      r.v = random_motion(rng, range);
      for (auto& c : r.color) c = rng.uniform(0.05, 0.95);
      rects_.push_back(r);
    }
  }
  double value(int c, double x, double y, double t) const override {
    double v = background_.value(c, x, y, t);
    for (const auto& r : rects_) {
      const double x0 = r.x + t * r.v.x, y0 = r.y + t * r.v.y;
      const double cover = overlap(x0, x0 + r.w, x) * overlap(y0, y0 + r.h, y);
      v = (1.0 - cover) * v + cover * r.color[static_cast<std::size_t>(c)];
    }
    return v;
  }
  Vec2 track(double x, double y, double t0, double t1) const override {
    for (auto it = rects_.rbegin(); it != rects_.rend(); ++it) {
      const double x0 = it->x + t0 * it->v.x, y0 = it->y + t0 * it->v.y;
      if (x >= x0 && x < x0 + it->w && y >= y0 && y < y0 + it->h)
        return {x + (t1 - t0) * it->v.x, y + (t1 - t0) * it->v.y};
    }
    return background_.track(x, y, t0, t1);
  }

 private:
  struct Rect {
    double x, y, w, h;
    Vec2 v;
    std::array<double, 3> color;
  };
  TranslatingScene background_;
  std::vector<Rect> rects_;
};

// Global affine motion about the patch center: p(t) = c + (I + tA)(p0 - c) + tv.
class AffineScene : public Scene {
 public:
  AffineScene(Rng& rng, double center, Vec2 v, double max_affine)
      : texture_(rng), center_(center), v_(v) {
    for (auto& a : a_) a = rng.uniform(-max_affine, max_affine);
  }
  double value(int c, double x, double y, double t) const override {
    const Vec2 p0 = origin(x, y, t);
    return texture_.value(c, p0.x, p0.y);
  }
  Vec2 track(double x, double y, double t0, double t1) const override {
    const Vec2 p0 = origin(x, y, t0);
    const double dx = p0.x - center_, dy = p0.y - center_;
    return {center_ + dx + t1 * (a_[0] * dx + a_[1] * dy) + t1 * v_.x,
            center_ + dy + t1 * (a_[2] * dx + a_[3] * dy) + t1 * v_.y};
  }

 private:
  Vec2 origin(double x, double y, double t) const {
    const double m00 = 1 + t * a_[0], m01 = t * a_[1], m10 = t * a_[2], m11 = 1 + t * a_[3];
    const double det = m00 * m11 - m01 * m10;
    const double rx = x - center_ - t * v_.x, ry = y - center_ - t * v_.y;
    return {center_ + (m11 * rx - m01 * ry) / det, center_ + (-m10 * rx + m00 * ry) / det};
  }

  NoiseTexture texture_;
  double center_;
  Vec2 v_;
  std::array<double, 4> a_{};
};

std::unique_ptr<Scene> make_scene(PatternFamily family, Rng& rng, double extent, const MotionRange& range,
                                  double max_affine) {
  if (family == PatternFamily::kMixed) family = static_cast<PatternFamily>(rng.below(3));
  switch (family) {
    case PatternFamily::kSinusoid:
      return std::make_unique<TranslatingScene>(std::make_unique<SinusoidTexture>(rng, 0.4), random_motion(rng, range));
    case PatternFamily::kRectangles:
      return std::make_unique<RectangleScene>(rng, extent, range);
    case PatternFamily::kAffineNoise:
    case PatternFamily::kMixed:
      break;
  }
  const Vec2 v = random_motion(rng, range);
  return std::make_unique<AffineScene>(rng, 0.5 * (extent - 1.0), v, max_affine);
}

void render(const Scene& s, double t, double* dst, int height, int width) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        *dst++ = std::clamp(s.value(c, x, y, t), 0.0, 1.0);
}

}  // namespace

TripletBatch synth_triplets(const SynthSpec& spec, std::uint64_t seed, std::int64_t index) {
  if (spec.batch_size < 1 || spec.patch_size < 1) throw std::invalid_argument("synth_triplets: empty batch");
  if (spec.min_motion < 0 || spec.max_motion < spec.min_motion || spec.max_affine < 0)
    throw std::invalid_argument("synth_triplets: invalid motion range");
  const std::int64_t b = spec.batch_size, p = spec.patch_size, plane = p * p;
  TripletBatch out{Tensor({b, 3, p, p}), Tensor({b, 3, p, p}), Tensor({b, 3, p, p}), Tensor({b, 2, p, p})};
  for (std::int64_t i = 0; i < b; ++i) {
    Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(index)), static_cast<std::uint64_t>(i)));
    const auto scene = make_scene(spec.family, rng, double(p), {spec.min_motion, spec.max_motion, spec.direction}, spec.max_affine);
    const std::size_t off = static_cast<std::size_t>(i * 3 * plane);
    render(*scene, 0.0, out.past.mutable_values().data() + off, spec.patch_size, spec.patch_size);
    render(*scene, 0.5, out.current.mutable_values().data() + off, spec.patch_size, spec.patch_size);
    render(*scene, 1.0, out.future.mutable_values().data() + off, spec.patch_size, spec.patch_size);
    double* f = out.flow_to_future.mutable_values().data() + i * 2 * plane;
    for (std::int64_t y = 0; y < p; ++y)
      for (std::int64_t x = 0; x < p; ++x) {
        const Vec2 q = scene->track(double(x), double(y), 0.5, 1.0);
        f[y * p + x] = q.x - double(x);
        f[plane + y * p + x] = q.y - double(y);
      }
  }
  return out;
}

TripletSource synth_source(const SynthSpec& spec, std::uint64_t seed) {
  return [spec, seed](std::int64_t index) { return synth_triplets(spec, seed, index); };
}

std::vector<Tensor> synth_clip(PatternFamily family, int frames, int height, int width, double speed,
                               std::uint64_t seed) {
  if (frames < 1 || height < 1 || width < 1) throw std::invalid_argument("synth_clip: empty clip");
  Rng rng(seed);
  // Per-frame motion; the affine rate is kept small so long clips stay in view.
  const auto scene = make_scene(family, rng, double(std::min(height, width)), {speed, speed, {}}, 0.004);
  std::vector<Tensor> out;
  for (int t = 0; t < frames; ++t) {
    Tensor f({1, 3, height, width});
    render(*scene, double(t), f.mutable_values().data(), height, width);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace lhbvc
