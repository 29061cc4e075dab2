// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "adapters/errors.hpp"

namespace adapters {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

thread_local Tape* tls_tape = nullptr;

}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  check_extents(shape);
  storage_ = std::make_shared<detail::TensorStorage>();
  storage_->values.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_extents(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                     " values");
  }
  storage_ = std::make_shared<detail::TensorStorage>();
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::of(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(v));
}

detail::TensorStorage& Tensor::storage() const {
  if (!storage_) throw ContractError("use of an undefined tensor");
  return *storage_;
}

const Shape& Tensor::shape() const { return storage().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::span<double> Tensor::values() & { return storage().values; }
std::span<const double> Tensor::values() const& { return storage().values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return values()[0];
}

double Tensor::operator()(std::size_t i) const { return values()[i]; }

double Tensor::operator()(std::size_t i, std::size_t j) const {
  return values()[i * shape()[1] + j];
}

double Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) const {
  const auto& s = shape();
  return values()[(i * s[1] + j) * s[2] + k];
}

double& Tensor::at(std::size_t i, std::size_t j) { return values()[i * shape()[1] + j]; }

bool Tensor::requires_grad() const { return storage().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  storage().requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !storage().grad.empty(); }

std::span<const double> Tensor::grad() const& { return storage().grad; }

std::span<double> Tensor::grad_buffer() {
  auto& s = storage();
  if (s.grad.empty()) s.grad.assign(s.values.size(), 0.0);
  return s.grad;
}

void Tensor::zero_grad() {
  auto& g = storage().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::clear_grad() {
  auto& g = storage().grad;
  g.clear();
  g.shrink_to_fit();
}

Tensor Tensor::clone() const {
  const auto& s = storage();
  return Tensor(s.shape, s.values);
}

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, BackwardRule rule) {
  nodes_.push_back(Node{std::move(inputs), output, std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that is not on the tape");
  }
  std::size_t end = nodes_.size();
  while (end > 0 && !nodes_[end - 1].output.is_same(loss)) --end;
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (std::size_t i = end; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.output.has_grad()) continue;
    node.rule(node.output, node.inputs);
  }
}

Tape* current_tape() noexcept { return tls_tape; }

TapeScope::TapeScope(Tape& tape) noexcept : previous_(tls_tape) { tls_tape = &tape; }
TapeScope::~TapeScope() { tls_tape = previous_; }

NoGradScope::NoGradScope() noexcept : previous_(tls_tape) { tls_tape = nullptr; }
NoGradScope::~NoGradScope() { tls_tape = previous_; }

}  // namespace adapters
