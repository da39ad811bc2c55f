// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/warp.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "lhbvc/ops.hpp"

namespace lhbvc {

FlowField::FlowField(Tensor t) : t_(std::move(t)) {
  if (t_.rank() != 4 || t_.dim(1) != 2) {
    throw std::invalid_argument("FlowField requires shape [B,2,H,W], got " + shape_string(t_.shape()));
  }
}

FlowField FlowField::zeros(std::int64_t batch, std::int64_t height, std::int64_t width) {
  return FlowField(Tensor(Shape{batch, 2, height, width}));
}

namespace {

Tensor pixel_grid(std::int64_t batch, std::int64_t h, std::int64_t w) {
  Tensor grid(Shape{batch, 2, h, w});
  auto g = grid.mutable_values();
  const std::int64_t plane = h * w;
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        g[static_cast<std::size_t>(b * 2 * plane + y * w + x)] = static_cast<double>(x);
        g[static_cast<std::size_t>(b * 2 * plane + plane + y * w + x)] = static_cast<double>(y);
      }
  return grid;
}

}  // namespace

Tensor backwarp(const Tensor& reference, const FlowField& flow) {
  if (reference.rank() != 4) {
    throw std::invalid_argument("backwarp: reference must be [B,C,H,W], got " + shape_string(reference.shape()));
  }
  const auto& f = flow.tensor();
  if (f.dim(0) != reference.dim(0) || f.dim(2) != reference.dim(2) || f.dim(3) != reference.dim(3)) {
    throw std::invalid_argument("backwarp: flow " + shape_string(f.shape()) + " does not match reference " +
                                shape_string(reference.shape()));
  }
  const Tensor coords = add(pixel_grid(f.dim(0), f.dim(2), f.dim(3)), f);
  return bilinear_sample(reference, coords);
}

Tensor fuse_bidirectional(const Tensor& warped_past, const Tensor& warped_future, const MaskPair& masks) {
  const auto& a = warped_past;
  const auto& b = warped_future;
  if (a.shape() != b.shape() || a.rank() != 4) {
    throw std::invalid_argument("fuse_bidirectional: predictions must share a [B,C,H,W] shape, got " +
                                shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const Shape mask_shape{a.dim(0), 1, a.dim(2), a.dim(3)};
  if (masks.m1.shape() != mask_shape || masks.m2.shape() != mask_shape) {
    throw std::invalid_argument("fuse_bidirectional: masks must be " + shape_string(mask_shape));
  }
  const auto m1 = masks.m1.values(), m2 = masks.m2.values();
  for (std::size_t i = 0; i < m1.size(); ++i) {
    if (m1[i] < 0.0 || m2[i] < 0.0) {
      throw std::invalid_argument("fuse_bidirectional: negative mask value at element " + std::to_string(i));
    }
  }
  const std::int64_t batch = a.dim(0), c = a.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor weight(mask_shape);
  auto wv = weight.mutable_values();
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = m1[i] / std::max(m1[i] + m2[i], kMaskEpsilon);

  Tensor out(a.shape());
  {
    auto av = a.values(), bv = b.values();
    auto o = out.mutable_values();
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < plane; ++i) {
          const auto idx = static_cast<std::size_t>((n * c + ch) * plane + i);
          const double w = wv[static_cast<std::size_t>(n * plane + i)];
          o[idx] = w * av[idx] + (1.0 - w) * bv[idx];
        }
  }
  detail::check_finite(out, "fuse_bidirectional");

  if (detail::should_record({&a, &b, &masks.m1, &masks.m2})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b, tm1 = masks.m1, tm2 = masks.m2;
    Tape::active()->record(out, [ta, tb, tm1, tm2, weight, out, batch, c, plane]() mutable {
      const auto g = out.grad();
      const auto av = ta.values(), bv = tb.values(), wv = weight.values();
      const auto m1 = tm1.values(), m2 = tm2.values();
      std::vector<double> gw(wv.size(), 0.0);
      double* ga = ta.requires_grad() ? ta.mutable_grad().data() : nullptr;
      double* gb = tb.requires_grad() ? tb.mutable_grad().data() : nullptr;
      for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
          for (std::int64_t i = 0; i < plane; ++i) {
            const auto idx = static_cast<std::size_t>((n * c + ch) * plane + i);
            const auto widx = static_cast<std::size_t>(n * plane + i);
            const double w = wv[widx];
            if (ga) ga[idx] += g[idx] * w;
            if (gb) gb[idx] += g[idx] * (1.0 - w);
            gw[widx] += g[idx] * (av[idx] - bv[idx]);
          }
      double* g1 = tm1.requires_grad() ? tm1.mutable_grad().data() : nullptr;
      double* g2 = tm2.requires_grad() ? tm2.mutable_grad().data() : nullptr;
      for (std::size_t i = 0; i < gw.size(); ++i) {
        const double s = m1[i] + m2[i];
        if (s >= kMaskEpsilon) {
          // w = m1 / s
          if (g1) g1[i] += gw[i] * m2[i] / (s * s);
          if (g2) g2[i] -= gw[i] * m1[i] / (s * s);
        } else if (g1) {
          g1[i] += gw[i] / kMaskEpsilon;
        }
      }
    });
  }
  return out;
}

FlowField add_flows(const FlowField& a, const FlowField& b) { return FlowField(add(a.tensor(), b.tensor())); }

}  // namespace lhbvc
