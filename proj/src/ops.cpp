// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lhbvc {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                                ", got " + shape_string(t.shape()));
  }
}

// Accumulates g into the gradient of t when t participates in backprop.
template <typename F>
void accumulate(const Tensor& t, F&& f) {
  if (!t.requires_grad()) return;
  f(t.mutable_grad());
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, const char* name, Forward fwd, Derivative deriv) {
  Tensor out(x.shape());
  auto in = x.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
  detail::check_finite(out, name);
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, out, deriv]() mutable {
      auto g = out.grad();
      auto in = x.values();
      auto ov = out.values();
      accumulate(x, [&](std::span<double> gx) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i], ov[i]);
      });
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (detail::should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [a, b, out]() mutable {
      auto g = out.grad();
      accumulate(a, [&](std::span<double> ga) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      });
      accumulate(b, [&](std::span<double> gb) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      });
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  if (detail::should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [a, b, out]() mutable {
      auto g = out.grad();
      accumulate(a, [&](std::span<double> ga) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      });
      accumulate(b, [&](std::span<double> gb) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      });
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  if (detail::should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [a, b, out]() mutable {
      auto g = out.grad();
      auto av = a.values(), bv = b.values();
      accumulate(a, [&](std::span<double> ga) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      });
      accumulate(b, [&](std::span<double> gb) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, out]() mutable {
      const double g = out.grad()[0];
      accumulate(x, [&](std::span<double> gx) {
        for (auto& v : gx) v += g;
      });
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.numel() == 0) throw std::invalid_argument("mse of empty tensors");
  auto av = a.values(), bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(av.size());
  Tensor out = Tensor::scalar(s * inv_n);
  if (detail::should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [a, b, out, inv_n]() mutable {
      const double g = out.grad()[0] * 2.0 * inv_n;
      auto av = a.values(), bv = b.values();
      accumulate(a, [&](std::span<double> ga) {
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (av[i] - bv[i]);
      });
      accumulate(b, [&](std::span<double> gb) {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
      });
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu: slope must lie in [0,1)");
  return unary(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double e) { return e; });
}

Tensor log_cosh(const Tensor& x) {
  return unary(
      x, "log_cosh",
      [](double v) {
        const double a = std::abs(v);
        // ln cosh(a) = a + log1p(exp(-2a)) - ln 2, rewritten near 0 to keep log_cosh(0) == 0 exactly.
        if (a < 1.0) return std::log1p(0.5 * std::expm1(2.0 * a)) - a;
        return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
      },
      [](double v, double) { return std::tanh(v); });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(
      x, "clamp_min", [floor](double v) { return v < floor ? floor : v; },
      [floor](double v, double) { return v < floor ? 0.0 : 1.0; });
}

// --- convolution ------------------------------------------------------------

namespace {

struct ConvGeometry {
  std::int64_t channels, height, width;  // image side
  std::int64_t kh, kw, stride, pad;
  std::int64_t out_h, out_w;             // column side
};

// Output columns [lo, hi) whose input column ox*stride - pad + kx is inside the image.
std::pair<std::int64_t, std::int64_t> valid_columns(const ConvGeometry& g, std::int64_t kx) {
  const std::int64_t first = g.pad - kx;  // ox * stride >= first
  const std::int64_t lo = first <= 0 ? 0 : (first + g.stride - 1) / g.stride;
  const std::int64_t last = g.width - 1 + g.pad - kx;  // ox * stride <= last
  const std::int64_t hi = last < 0 ? 0 : std::min(g.out_w, last / g.stride + 1);
  return {lo, std::max(lo, hi)};
}

// col[(c*kh + ky)*kw + kx][oy*out_w + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::int64_t cols = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const double* plane = img + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + iy * g.width + (lo * g.stride - g.pad + kx);
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(src, src + (hi - lo), dst + lo);
          } else {
            for (std::int64_t j = 0; j < hi - lo; ++j) dst[lo + j] = src[j * g.stride];
          }
          std::fill(dst + hi, dst + g.out_w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column entries back onto the image (accumulating).
void col2im(const double* col, const ConvGeometry& g, double* img) {
  const std::int64_t cols = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    double* plane = img + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const double* src = row + oy * g.out_w + lo;
          double* dst = plane + iy * g.width + (lo * g.stride - g.pad + kx);
          if (g.stride == 1) {
            for (std::int64_t j = 0; j < hi - lo; ++j) dst[j] += src[j];
          } else {
            for (std::int64_t j = 0; j < hi - lo; ++j) dst[j * g.stride] += src[j];
          }
        }
      }
    }
  }
}

// Per-thread column buffer, reused across calls and never zero-filled.
double* scratch(std::size_t n) {
  thread_local std::vector<double> buffer;
  if (buffer.size() < n) {
    buffer.clear();
    buffer.shrink_to_fit();
    buffer.resize(n);
  }
  return buffer.data();
}

bool is_pointwise(const ConvGeometry& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

void check_conv_args(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding,
                     const char* op, std::int64_t weight_in_axis, std::int64_t weight_out_axis) {
  require_rank(input, 4, op, "input");
  require_rank(weight, 4, op, "weight");
  require_rank(bias, 1, op, "bias");
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be positive");
  if (padding < 0) throw std::invalid_argument(std::string(op) + ": padding must be non-negative");
  if (input.dim(1) != weight.dim(static_cast<std::size_t>(weight_in_axis))) {
    throw std::invalid_argument(std::string(op) + ": input channel dimension (axis 1) is " +
                                std::to_string(input.dim(1)) + " but weight expects " +
                                std::to_string(weight.dim(static_cast<std::size_t>(weight_in_axis))));
  }
  if (bias.dim(0) != weight.dim(static_cast<std::size_t>(weight_out_axis))) {
    throw std::invalid_argument(std::string(op) + ": bias length " + std::to_string(bias.dim(0)) +
                                " does not match output channels " +
                                std::to_string(weight.dim(static_cast<std::size_t>(weight_out_axis))));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  check_conv_args(input, weight, bias, stride, padding, "conv2d", 1, 0);
  const std::int64_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (h + 2 * padding < kh) {
    throw std::invalid_argument("conv2d: kernel height " + std::to_string(kh) + " exceeds padded input height " +
                                std::to_string(h + 2 * padding));
  }
  if (w + 2 * padding < kw) {
    throw std::invalid_argument("conv2d: kernel width " + std::to_string(kw) + " exceeds padded input width " +
                                std::to_string(w + 2 * padding));
  }
  const ConvGeometry g{cin, h, w, kh, kw, stride, padding, (h + 2 * padding - kh) / stride + 1,
                       (w + 2 * padding - kw) / stride + 1};
  const std::int64_t k = cin * kh * kw, p = g.out_h * g.out_w;
  Tensor out(Shape{batch, cout, g.out_h, g.out_w});

  const ConstMatrixMap wmat(weight.values().data(), cout, k);
  double* col = is_pointwise(g) ? nullptr : scratch(static_cast<std::size_t>(k * p));
  const double* in = input.values().data();
  double* o = out.mutable_values().data();
  const auto bv = bias.values();
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* img = in + b * cin * h * w;
    const double* cols = img;
    if (!is_pointwise(g)) {
      im2col(img, g, col);
      cols = col;
    }
    MatrixMap omap(o + b * cout * p, cout, p);
    omap.noalias() = wmat * ConstMatrixMap(cols, k, p);
    for (std::int64_t c = 0; c < cout; ++c) omap.row(c).array() += bv[static_cast<std::size_t>(c)];
  }
  detail::check_finite(out, "conv2d");

  if (detail::should_record({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [input, weight, bias, out, g, k, p, batch, cin, cout]() mutable {
      const double* go = out.grad().data();
      const double* in = input.values().data();
      const ConstMatrixMap wmat(weight.values().data(), cout, k);
      double* col = scratch(static_cast<std::size_t>(k * p));
      double* gw = weight.requires_grad() ? weight.mutable_grad().data() : nullptr;
      double* gb = bias.requires_grad() ? bias.mutable_grad().data() : nullptr;
      double* gi = input.requires_grad() ? input.mutable_grad().data() : nullptr;
      for (std::int64_t b = 0; b < batch; ++b) {
        const ConstMatrixMap gmap(go + b * cout * p, cout, p);
        if (gb) {
          // Plain loop: Eigen reductions pick a summation order by pointer alignment.
          for (std::int64_t c = 0; c < cout; ++c) {
            const double* row = go + (b * cout + c) * p;
            double s = 0.0;
            for (std::int64_t i = 0; i < p; ++i) s += row[i];
            gb[c] += s;
          }
        }
        if (gw) {
          const double* img = in + b * cin * g.height * g.width;
          const double* cols = img;
          if (!is_pointwise(g)) {
            im2col(img, g, col);
            cols = col;
          }
          MatrixMap(gw, cout, k).noalias() += gmap * ConstMatrixMap(cols, k, p).transpose();
        }
        if (gi) {
          double* dimg = gi + b * cin * g.height * g.width;
          if (is_pointwise(g)) {
            MatrixMap(dimg, k, p).noalias() += wmat.transpose() * gmap;
          } else {
            MatrixMap(col, k, p).noalias() = wmat.transpose() * gmap;
            col2im(col, g, dimg);
          }
        }
      }
    });
  }
  return out;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  check_conv_args(input, weight, bias, stride, padding, "conv2d_transpose", 0, 1);
  const std::int64_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const std::int64_t oh = (h - 1) * stride - 2 * padding + kh;
  const std::int64_t ow = (w - 1) * stride - 2 * padding + kw;
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("conv2d_transpose: padding " + std::to_string(padding) +
                                " leaves an empty output for input " + shape_string(input.shape()));
  }
  // Geometry of the forward convolution this operator is the adjoint of.
  const ConvGeometry g{cout, oh, ow, kh, kw, stride, padding, h, w};
  const std::int64_t k = cout * kh * kw, p = h * w;
  Tensor out(Shape{batch, cout, oh, ow});

  const ConstMatrixMap wmat(weight.values().data(), cin, k);
  double* col = scratch(static_cast<std::size_t>(k * p));
  const double* in = input.values().data();
  double* o = out.mutable_values().data();
  const auto bv = bias.values();
  for (std::int64_t b = 0; b < batch; ++b) {
    const ConstMatrixMap xmap(in + b * cin * p, cin, p);
    double* img = o + b * cout * oh * ow;
    if (is_pointwise(g)) {
      MatrixMap(img, k, p).noalias() = wmat.transpose() * xmap;
    } else {
      MatrixMap(col, k, p).noalias() = wmat.transpose() * xmap;
      col2im(col, g, img);
    }
    for (std::int64_t c = 0; c < cout; ++c) {
      double* plane = img + c * oh * ow;
      const double bc = bv[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < oh * ow; ++i) plane[i] += bc;
    }
  }
  detail::check_finite(out, "conv2d_transpose");

  if (detail::should_record({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [input, weight, bias, out, g, k, p, batch, cin, cout, oh, ow]() mutable {
      const double* go = out.grad().data();
      const double* in = input.values().data();
      const ConstMatrixMap wmat(weight.values().data(), cin, k);
      double* col = scratch(static_cast<std::size_t>(k * p));
      double* gw = weight.requires_grad() ? weight.mutable_grad().data() : nullptr;
      double* gb = bias.requires_grad() ? bias.mutable_grad().data() : nullptr;
      double* gi = input.requires_grad() ? input.mutable_grad().data() : nullptr;
      for (std::int64_t b = 0; b < batch; ++b) {
        const double* gimg = go + b * cout * oh * ow;
        if (gb) {
          for (std::int64_t c = 0; c < cout; ++c) {
            const double* plane = gimg + c * oh * ow;
            double s = 0.0;
            for (std::int64_t i = 0; i < oh * ow; ++i) s += plane[i];
            gb[c] += s;
          }
        }
        if (!gw && !gi) continue;
        const double* cols = gimg;
        if (!is_pointwise(g)) {
          im2col(gimg, g, col);
          cols = col;
        }
        const ConstMatrixMap cmap(cols, k, p);
        if (gw) MatrixMap(gw, cin, k).noalias() += ConstMatrixMap(in + b * cin * p, cin, p) * cmap.transpose();
        if (gi) MatrixMap(gi + b * cin * p, cin, p).noalias() += wmat * cmap;
      }
    });
  }
  return out;
}

// --- channel plumbing -------------------------------------------------------

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const auto& ref = parts.front();
  require_rank(ref, 4, "concat_channels", "input");
  const std::int64_t batch = ref.dim(0), h = ref.dim(2), w = ref.dim(3);
  std::int64_t total = 0;
  for (const auto& t : parts) {
    require_rank(t, 4, "concat_channels", "input");
    if (t.dim(0) != batch || t.dim(2) != h || t.dim(3) != w) {
      throw std::invalid_argument("concat_channels: incompatible shapes " + shape_string(ref.shape()) + " and " +
                                  shape_string(t.shape()));
    }
    total += t.dim(1);
  }
  const std::int64_t plane = h * w;
  Tensor out(Shape{batch, total, h, w});
  double* o = out.mutable_values().data();
  for (std::int64_t b = 0; b < batch; ++b) {
    std::int64_t offset = 0;
    for (const auto& t : parts) {
      const std::int64_t c = t.dim(1);
      const double* src = t.values().data() + b * c * plane;
      std::copy(src, src + c * plane, o + (b * total + offset) * plane);
      offset += c;
    }
  }
  bool record = false;
  for (const auto& t : parts) record = record || detail::should_record({&t});
  if (record) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    Tape::active()->record(out, [inputs, out, batch, total, plane]() mutable {
      const double* g = out.grad().data();
      std::int64_t offset = 0;
      for (auto& t : inputs) {
        const std::int64_t c = t.dim(1);
        accumulate(t, [&](std::span<double> gt) {
          for (std::int64_t b = 0; b < batch; ++b) {
            const double* src = g + (b * total + offset) * plane;
            double* dst = gt.data() + b * c * plane;
            for (std::int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        });
        offset += c;
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t end) {
  require_rank(x, 4, "slice_channels", "input");
  if (begin < 0 || end > x.dim(1) || begin >= end) {
    throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") invalid for " + std::to_string(x.dim(1)) + " channels");
  }
  const std::int64_t batch = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3), n = end - begin;
  Tensor out(Shape{batch, n, x.dim(2), x.dim(3)});
  const double* src = x.values().data();
  double* o = out.mutable_values().data();
  for (std::int64_t b = 0; b < batch; ++b) {
    std::copy(src + (b * c + begin) * plane, src + (b * c + end) * plane, o + b * n * plane);
  }
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, out, batch, c, plane, n, begin]() mutable {
      const double* g = out.grad().data();
      accumulate(x, [&](std::span<double> gx) {
        for (std::int64_t b = 0; b < batch; ++b) {
          double* dst = gx.data() + (b * c + begin) * plane;
          const double* s = g + b * n * plane;
          for (std::int64_t i = 0; i < n * plane; ++i) dst[i] += s[i];
        }
      });
    });
  }
  return out;
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_batch: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw std::invalid_argument("concat_batch: inputs must have rank >= 1");
  std::int64_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), t.shape().begin() + 1)) {
      throw std::invalid_argument("concat_batch: incompatible shapes " + shape_string(shape) + " and " +
                                  shape_string(t.shape()));
    }
    total += t.dim(0);
  }
  shape[0] = total;
  Tensor out(shape);
  double* o = out.mutable_values().data();
  for (const auto& t : parts) o = std::copy(t.values().begin(), t.values().end(), o);
  bool record = false;
  for (const auto& t : parts) record = record || detail::should_record({&t});
  if (record) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    Tape::active()->record(out, [inputs, out]() mutable {
      const double* g = out.grad().data();
      for (auto& t : inputs) {
        accumulate(t, [&](std::span<double> gt) {
          for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
        });
        g += t.numel();
      }
    });
  }
  return out;
}

Tensor concat_batch(std::initializer_list<Tensor> parts) {
  return concat_batch(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_batch(const Tensor& x, std::int64_t begin, std::int64_t end) {
  if (x.rank() < 1 || begin < 0 || end > x.dim(0) || begin >= end) {
    throw std::invalid_argument("slice_batch: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") invalid for " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  const std::size_t per = x.numel() / static_cast<std::size_t>(shape[0]);
  shape[0] = end - begin;
  const std::size_t offset = per * static_cast<std::size_t>(begin);
  Tensor out(shape);
  std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(offset), out.numel(), out.mutable_values().begin());
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, out, offset]() mutable {
      const auto g = out.grad();
      accumulate(x, [&](std::span<double> gx) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      });
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& v) {
  if (x.rank() < 2) throw std::invalid_argument("scale_channels: input must have rank >= 2");
  require_rank(v, 1, "scale_channels", "vector");
  if (v.dim(0) != x.dim(1)) {
    throw std::invalid_argument("scale_channels: vector length " + std::to_string(v.dim(0)) +
                                " does not match channel dimension " + std::to_string(x.dim(1)));
  }
  const std::int64_t batch = x.dim(0), c = x.dim(1);
  const std::int64_t plane = c == 0 || batch == 0 ? 0 : static_cast<std::int64_t>(x.numel()) / (batch * c);
  Tensor out(x.shape());
  const double* xs = x.values().data();
  const double* vs = v.values().data();
  double* o = out.mutable_values().data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t base = (b * c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[base + i] = xs[base + i] * vs[ch];
    }
  if (detail::should_record({&x, &v})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, v, out, batch, c, plane]() mutable {
      const double* g = out.grad().data();
      const double* xs = x.values().data();
      const double* vs = v.values().data();
      accumulate(x, [&](std::span<double> gx) {
        for (std::int64_t b = 0; b < batch; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (b * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) gx[base + i] += g[base + i] * vs[ch];
          }
      });
      accumulate(v, [&](std::span<double> gv) {
        for (std::int64_t b = 0; b < batch; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (b * c + ch) * plane;
            double s = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) s += g[base + i] * xs[base + i];
            gv[ch] += s;
          }
      });
    });
  }
  return out;
}

Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma, bool inverse) {
  require_rank(x, 4, "gdn", "input");
  require_rank(beta, 1, "gdn", "beta");
  require_rank(gamma, 2, "gdn", "gamma");
  const std::int64_t batch = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  if (beta.dim(0) != c || gamma.dim(0) != c || gamma.dim(1) != c) {
    throw std::invalid_argument("gdn: beta " + shape_string(beta.shape()) + " and gamma " +
                                shape_string(gamma.shape()) + " do not match " + std::to_string(c) + " channels");
  }
  for (double b : beta.values())
    if (!(b > 0.0)) throw std::invalid_argument("gdn: beta must be positive");
  const double power = inverse ? 0.5 : -0.5;
  // norm[b] = gamma * x^2 + beta, one column per position.
  Tensor norm(x.shape());
  Tensor out(x.shape());
  const ConstMatrixMap gm(gamma.values().data(), c, c);
  const auto bv = beta.values();
  for (std::int64_t b = 0; b < batch; ++b) {
    const ConstMatrixMap xm(x.values().data() + b * c * p, c, p);
    MatrixMap nm(norm.mutable_values().data() + b * c * p, c, p);
    nm.noalias() = gm * xm.cwiseAbs2();
    for (std::int64_t ch = 0; ch < c; ++ch) nm.row(ch).array() += bv[static_cast<std::size_t>(ch)];
  }
  {
    const double* xs = x.values().data();
    const double* ns = norm.values().data();
    double* o = out.mutable_values().data();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = xs[i] * (inverse ? std::sqrt(ns[i]) : 1.0 / std::sqrt(ns[i]));
  }
  detail::check_finite(out, "gdn");
  if (detail::should_record({&x, &beta, &gamma})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, beta, gamma, out, norm, batch, c, p, power]() mutable {
      const double* g = out.grad().data();
      const double* xs = x.values().data();
      const double* ns = norm.values().data();
      // t = g * x * power * norm^(power - 1): gradient with respect to norm.
      // scaled[i] = norm^power, computed through sqrt.
      std::vector<double> t(x.numel()), scaled(x.numel());
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = std::sqrt(ns[i]);
        scaled[i] = power > 0.0 ? r : 1.0 / r;
        t[i] = g[i] * xs[i] * power * scaled[i] / ns[i];
      }
      const ConstMatrixMap gm(gamma.values().data(), c, c);
      accumulate(x, [&](std::span<double> gx) {
        RowMatrix back(c, p);
        for (std::int64_t b = 0; b < batch; ++b) {
          const std::int64_t off = b * c * p;
          back.noalias() = gm.transpose() * ConstMatrixMap(t.data() + off, c, p);
          for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < p; ++i) {
              const std::int64_t k = off + ch * p + i;
              gx[static_cast<std::size_t>(k)] += g[k] * scaled[static_cast<std::size_t>(k)] + 2.0 * xs[k] * back(ch, i);
            }
        }
      });
      accumulate(beta, [&](std::span<double> gb) {
        for (std::int64_t b = 0; b < batch; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double* row = t.data() + (b * c + ch) * p;
            double s = 0.0;
            for (std::int64_t i = 0; i < p; ++i) s += row[i];
            gb[static_cast<std::size_t>(ch)] += s;
          }
      });
      accumulate(gamma, [&](std::span<double> gg) {
        RowMatrix sq(c, p);
        for (std::int64_t b = 0; b < batch; ++b) {
          sq = ConstMatrixMap(xs + b * c * p, c, p).cwiseAbs2();
          MatrixMap(gg.data(), c, c).noalias() += ConstMatrixMap(t.data() + b * c * p, c, p) * sq.transpose();
        }
      });
    });
  }
  return out;
}

Tensor select_row(const Tensor& m, std::int64_t row) {
  require_rank(m, 2, "select_row", "matrix");
  if (row < 0 || row >= m.dim(0)) {
    throw std::invalid_argument("select_row: row " + std::to_string(row) + " out of range for " +
                                shape_string(m.shape()));
  }
  const std::int64_t c = m.dim(1);
  Tensor out(Shape{c});
  std::copy_n(m.values().data() + row * c, c, out.mutable_values().data());
  if (detail::should_record({&m})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [m, out, row, c]() mutable {
      auto g = out.grad();
      accumulate(m, [&](std::span<double> gm) {
        for (std::int64_t i = 0; i < c; ++i) gm[row * c + i] += g[i];
      });
    });
  }
  return out;
}

// --- sampling ---------------------------------------------------------------

Tensor bilinear_sample(const Tensor& source, const Tensor& coords) {
  require_rank(source, 4, "bilinear_sample", "source");
  require_rank(coords, 4, "bilinear_sample", "coords");
  const std::int64_t batch = source.dim(0), c = source.dim(1), h = source.dim(2), w = source.dim(3);
  if (coords.dim(0) != batch || coords.dim(1) != 2) {
    throw std::invalid_argument("bilinear_sample: coords must be [B,2,H',W'], got " + shape_string(coords.shape()));
  }
  const std::int64_t oh = coords.dim(2), ow = coords.dim(3), op = oh * ow, sp = h * w;
  Tensor out(Shape{batch, c, oh, ow});
  const double* src = source.values().data();
  const double* cs = coords.values().data();
  double* o = out.mutable_values().data();
  const double xmax = static_cast<double>(w - 1), ymax = static_cast<double>(h - 1);

  for (std::int64_t b = 0; b < batch; ++b) {
    const double* cx = cs + b * 2 * op;
    const double* cy = cx + op;
    for (std::int64_t i = 0; i < op; ++i) {
      const double x = std::clamp(cx[i], 0.0, xmax);
      const double y = std::clamp(cy[i], 0.0, ymax);
      const auto x0 = static_cast<std::int64_t>(std::floor(x));
      const auto y0 = static_cast<std::int64_t>(std::floor(y));
      const std::int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double wx = x - static_cast<double>(x0), wy = y - static_cast<double>(y0);
      const double w00 = (1.0 - wx) * (1.0 - wy), w01 = wx * (1.0 - wy), w10 = (1.0 - wx) * wy, w11 = wx * wy;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double* plane = src + (b * c + ch) * sp;
        o[(b * c + ch) * op + i] = w00 * plane[y0 * w + x0] + w01 * plane[y0 * w + x1] + w10 * plane[y1 * w + x0] +
                                   w11 * plane[y1 * w + x1];
      }
    }
  }
  detail::check_finite(out, "bilinear_sample");

  if (detail::should_record({&source, &coords})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [source, coords, out, batch, c, h, w, op, sp, xmax, ymax]() mutable {
      const double* g = out.grad().data();
      const double* src = source.values().data();
      const double* cs = coords.values().data();
      double* gs = source.requires_grad() ? source.mutable_grad().data() : nullptr;
      double* gc = coords.requires_grad() ? coords.mutable_grad().data() : nullptr;
      for (std::int64_t b = 0; b < batch; ++b) {
        const double* cx = cs + b * 2 * op;
        const double* cy = cx + op;
        for (std::int64_t i = 0; i < op; ++i) {
          const bool x_inside = cx[i] > 0.0 && cx[i] < xmax;
          const bool y_inside = cy[i] > 0.0 && cy[i] < ymax;
          const double x = std::clamp(cx[i], 0.0, xmax);
          const double y = std::clamp(cy[i], 0.0, ymax);
          const auto x0 = static_cast<std::int64_t>(std::floor(x));
          const auto y0 = static_cast<std::int64_t>(std::floor(y));
          const std::int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
          const double wx = x - static_cast<double>(x0), wy = y - static_cast<double>(y0);
          double dx = 0.0, dy = 0.0;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double go = g[(b * c + ch) * op + i];
            const double* plane = src + (b * c + ch) * sp;
            const double v00 = plane[y0 * w + x0], v01 = plane[y0 * w + x1];
            const double v10 = plane[y1 * w + x0], v11 = plane[y1 * w + x1];
            if (gs) {
              double* gp = gs + (b * c + ch) * sp;
              gp[y0 * w + x0] += go * (1.0 - wx) * (1.0 - wy);
              gp[y0 * w + x1] += go * wx * (1.0 - wy);
              gp[y1 * w + x0] += go * (1.0 - wx) * wy;
              gp[y1 * w + x1] += go * wx * wy;
            }
            dx += go * ((v01 - v00) * (1.0 - wy) + (v11 - v10) * wy);
            dy += go * ((v10 - v00) * (1.0 - wx) + (v11 - v01) * wx);
          }
          if (gc) {
            if (x_inside) gc[b * 2 * op + i] += dx;
            if (y_inside) gc[b * 2 * op + op + i] += dy;
          }
        }
      }
    });
  }
  return out;
}

Tensor add_uniform_noise(const Tensor& x, Rng& rng) {
  Tensor out(x.shape());
  auto in = x.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] + (rng.uniform() - 0.5);
  if (detail::should_record({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record(out, [x, out]() mutable {
      auto g = out.grad();
      accumulate(x, [&](std::span<double> gx) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
    });
  }
  return out;
}

double round_half_away(double v) { return std::round(v); }

Tensor round_half_away(const Tensor& x) {
  Tensor out(x.shape());
  auto in = x.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::round(in[i]);
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

}  // namespace lhbvc
