// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>

#include "adapters/tensor.hpp"

namespace adapters {

/// Scalar-valued function of tensors captured by the closure.
using LossFn = std::function<Tensor()>;

/// Compares the tape gradient of `f` w.r.t. `x` against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
///
/// Returns the max relative error, each coordinate normalized by
/// max(|analytic|, |numeric|, floor). `x` must require a gradient; its values are
/// restored on return and its gradient buffer is cleared.
///
/// Central differences carry roughly 1e-16 * |f| / eps of absolute roundoff, so
/// coordinates with gradients near that level need a larger `floor`.
double grad_check(const LossFn& f, Tensor x, double eps, double floor = 1e-8);

/// Max of grad_check over several tensors, sharing one analytic pass.
double grad_check(const LossFn& f, std::span<Tensor> xs, double eps, double floor = 1e-8);

}  // namespace adapters
