// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "adapters/encoder.hpp"
#include "adapters/tensor.hpp"

namespace adapters::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline TokenBatch random_tokens(std::size_t batch, std::size_t seq, std::size_t vocab,
                                std::mt19937_64& rng) {
  TokenBatch tb;
  tb.batch = batch;
  tb.seq = seq;
  std::uniform_int_distribution<int> u(0, static_cast<int>(vocab) - 1);
  for (std::size_t i = 0; i < batch * seq; ++i) tb.ids.push_back(u(rng));
  return tb;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(),
                                              b.values().begin());
}

/// Overwrites every value with uniform noise so gradients are non-trivial.
inline void randomize(Tensor t, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.values()) v = u(rng);
}

}  // namespace adapters::testing

#include "adapters/adapter.hpp"

namespace adapters::testing {

/// Replaces every adapter parameter with noise so the adapter is far from identity.
inline void randomize_adapter(const Adapter& adapter, std::mt19937_64& rng, double scale = 0.3) {
  for (const auto& [name, t] : adapter.parameters()) randomize(t, rng, scale);
}

}  // namespace adapters::testing
