// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lhbvc {

using Shape = std::vector<std::int64_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Copies share storage; operations never mutate their inputs. Parameters are
/// the only tensors mutated in place (by the optimizer).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Leaf tensor that accumulates gradients when used under a recording tape.
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<double> mutable_grad() const;
  void zero_grad();

  /// Deep copy with no gradient tracking.
  Tensor clone() const;
  /// Same shape, new buffer; used for reshapes that keep element order.
  Tensor reshaped(Shape shape) const;

  const void* id() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable primitive operations.
///
/// Recording is enabled for the current thread by a `Tape::Recording` guard.
/// Operations are appended as they execute, so the record is already in
/// topological order and backprop walks it once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, BackwardFn backward);
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Tape recording on this thread, or nullptr.
  static Tape* active();

  class Recording {
   public:
    explicit Recording(Tape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  /// Temporarily disables recording (inference inside a training step).
  class Paused {
   public:
    Paused();
    ~Paused();
    Paused(const Paused&) = delete;
    Paused& operator=(const Paused&) = delete;

   private:
    Tape* previous_;
  };

 private:
  friend void backprop(Tape& tape, const Tensor& loss);
  struct Op {
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Op> ops_;
};

/// Populates gradients of every parameter reachable from `loss` and clears
/// the tape. Throws std::invalid_argument if `loss` is not a scalar.
void backprop(Tape& tape, const Tensor& loss);

namespace detail {

/// True when a tape is active and any input needs a gradient.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Aborts with a diagnostic in debug builds if any value is not finite.
void check_finite(const Tensor& t, const char* op);

}  // namespace detail

}  // namespace lhbvc
