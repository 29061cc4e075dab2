// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "adapters/errors.hpp"

namespace adapters {

double grad_check(const LossFn& f, Tensor x, double eps, double floor) {
  Tensor xs[] = {x};
  return grad_check(f, xs, eps, floor);
}

double grad_check(const LossFn& f, std::span<Tensor> xs, double eps, double floor) {
  if (eps <= 0.0 || floor <= 0.0) throw ContractError("grad_check: eps and floor must be positive");
  for (auto& x : xs) {
    if (!x.requires_grad()) throw ContractError("grad_check: tensor does not require a gradient");
    x.clear_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (auto& x : xs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(x.numel(), 0.0);
    }
    x.clear_grad();
  }

  NoGradScope no_grad;
  double worst = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto v = xs[t].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double up = f().item();
      v[i] = saved - eps;
      const double down = f().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace adapters
