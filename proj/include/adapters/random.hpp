// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "adapters/tensor.hpp"

namespace adapters {

using Rng = std::mt19937_64;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
Tensor uniform_tensor(Shape shape, double low, double high, Rng& rng);

/// Stable 64-bit FNV-1a hash, used to derive per-name seeds.
std::uint64_t fnv1a(std::string_view text);

/// Generator seeded from (seed, name) so results do not depend on creation order.
Rng derived_rng(std::uint64_t seed, std::string_view name);

}  // namespace adapters
