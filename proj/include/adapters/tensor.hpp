// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adapters {

/// Extents of a tensor, outermost first. Every extent is positive; rank 0 is a scalar.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty while no gradient is present
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Use clone() for a
/// detached deep copy. Operations never mutate their inputs' values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor of(std::initializer_list<double> values);
  static Tensor rows(std::initializer_list<std::initializer_list<double>> rows);

  bool defined() const noexcept { return static_cast<bool>(storage_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values().size(); }

  // Spans alias the storage; calling these on a temporary would dangle.
  std::span<double> values() &;
  std::span<const double> values() const&;
  std::span<const double> values() && = delete;
  double item() const;

  double operator()(std::size_t i) const;
  double operator()(std::size_t i, std::size_t j) const;
  double operator()(std::size_t i, std::size_t j, std::size_t k) const;
  double& at(std::size_t i, std::size_t j);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const&;
  std::span<const double> grad() && = delete;
  /// Gradient buffer, allocated as zeros on first access.
  std::span<double> grad_buffer();
  void zero_grad();
  void clear_grad();

  /// Deep copy of shape and values; the copy has no gradient and requires_grad == false.
  Tensor clone() const;
  bool is_same(const Tensor& other) const noexcept { return storage_ == other.storage_; }

 private:
  detail::TensorStorage& storage() const;
  std::shared_ptr<detail::TensorStorage> storage_;
};

/// Ordered record of differentiable operations.
///
/// Operations are recorded only while a tape is current on the calling thread
/// (see TapeScope) and at least one input requires a gradient. backward() walks
/// the records in exact reverse order.
class Tape {
 public:
  using BackwardRule = std::function<void(const Tensor& output, std::span<Tensor> inputs)>;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardRule rule);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor with requires_grad.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardRule rule;
  };
  std::vector<Node> nodes_;
};

/// The tape operations record onto on this thread, or nullptr.
Tape* current_tape() noexcept;

/// Makes a tape current on this thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) noexcept;
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording on this thread for the lifetime of the scope.
class NoGradScope {
 public:
  NoGradScope() noexcept;
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace adapters

namespace adapters {

/// Ordered (name, tensor) pairs; names are stable and unique within a collection.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

}  // namespace adapters
