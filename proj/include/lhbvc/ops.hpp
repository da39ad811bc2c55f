// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "lhbvc/rng.hpp"
#include "lhbvc/tensor.hpp"

// Differentiable primitives. Every function records itself on the active tape
// when one of its inputs requires a gradient; otherwise it is a plain kernel.
namespace lhbvc {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean((a - b)^2) over every element.
Tensor mse(const Tensor& a, const Tensor& b);

/// max(x, slope * x); the derivative at 0 is `slope`.
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
/// ln cosh(x); zero at 0, derivative tanh(x).
Tensor log_cosh(const Tensor& x);
/// max(x, floor); the gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& x, double floor);

/// Cross-correlation. input [B,Cin,H,W], weight [Cout,Cin,kH,kW], bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Adjoint of conv2d. input [B,Cin,H,W], weight [Cin,Cout,kH,kW], bias [Cout];
/// output spatial size (H-1)*stride - 2*padding + kH.
Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Concatenation along axis 1 of 4-D tensors.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);
/// Channels [begin, end) of a 4-D tensor.
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t end);

/// Concatenation along axis 0; trailing dimensions must agree.
Tensor concat_batch(std::span<const Tensor> parts);
Tensor concat_batch(std::initializer_list<Tensor> parts);
/// Samples [begin, end) along axis 0.
Tensor slice_batch(const Tensor& x, std::int64_t begin, std::int64_t end);

/// x[b,c,...] * v[c]. x has rank >= 2, v has shape [C].
Tensor scale_channels(const Tensor& x, const Tensor& v);

/// Generalized divisive normalization of [B,C,H,W]:
/// y_c = x_c / sqrt(beta_c + sum_k gamma_ck x_k^2), or times the root when
/// `inverse`. beta [C] must be positive, gamma is [C,C].
Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma, bool inverse = false);

/// Row `row` of a matrix [R,C] as a vector [C].
Tensor select_row(const Tensor& m, std::int64_t row);

/// Four-tap bilinear sampling with clamp-to-edge. coords [B,2,H,W] holds
/// absolute (x, y) positions in pixels for every output location.
Tensor bilinear_sample(const Tensor& source, const Tensor& coords);

/// x + u with u ~ U(-0.5, 0.5) i.i.d.; the noise is a constant for backprop.
Tensor add_uniform_noise(const Tensor& x, Rng& rng);

/// Round half away from zero. Not differentiable (never recorded).
Tensor round_half_away(const Tensor& x);
double round_half_away(double v);

/// Inner product of two equally shaped tensors (not recorded).
double dot(const Tensor& a, const Tensor& b);

}  // namespace lhbvc
