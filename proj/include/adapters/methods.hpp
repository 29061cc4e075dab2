// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "adapters/hooks.hpp"
#include "adapters/ops.hpp"
#include "adapters/tensor.hpp"

namespace adapters {

// Functional building blocks of the adapter methods. Every weight is stored
// [in, out] so a projection is x W + b on row vectors.

/// Parameterized hypercomplex linear layer:
///   W = sum_i kron(rule[i], left[i] right[i]),   y = x W + bias.
/// rule[i] is n x n, left[i] is (in/n) x rank, right[i] is rank x (out/n).
struct PhmParams {
  std::vector<Tensor> rule;
  std::vector<Tensor> left;
  std::vector<Tensor> right;
  Tensor bias;  // [out]
};

/// Materializes the [in, out] PHM weight.
Tensor phm_weight(const PhmParams& p);

/// x W + bias. W is rebuilt per call; at adapter widths the Kronecker sum is
/// cheaper than the matmul that consumes it.
Tensor phm_linear(const Tensor& x, const PhmParams& p);

struct DenseProjection {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

using Projection = std::variant<DenseProjection, PhmParams>;

Tensor project(const Tensor& x, const Projection& p);

struct BottleneckParams {
  Projection down;  // d -> b
  Projection up;    // b -> d, zero-initialized
  Activation nonlinearity = Activation::kRelu;
  double scaling = 1.0;
};

/// scaling * (up(f(down(x)))).
Tensor bottleneck_delta(const Tensor& x, const BottleneckParams& p);

/// bottleneck_delta(h) + residual.
Tensor bottleneck_forward(const Tensor& h, const BottleneckParams& p, const Tensor& residual);

/// Additive coupling on channel halves with bottleneck sub-networks F and G.
struct InvertibleParams {
  BottleneckParams f;
  BottleneckParams g;
};

enum class Direction { kForward, kInverse };

/// forward: y1 = x1 + F(x2), y2 = x2 + G(y1); inverse undoes it exactly.
Tensor invertible_apply(const Tensor& x, const InvertibleParams& p, Direction dir);

/// Prepends `prompt` [p, d] to every row of `embedded` [N, S, d]; the mask gains
/// p leading ones. An undefined prompt means p = 0. Throws CapacityError if
/// p + S > max_seq.
SequenceExtension prompt_extend(const Tensor& embedded, const Tensor& prompt, const Tensor& mask,
                                std::size_t max_seq);

struct PrefixParams {
  Tensor embedding;  // P [p, d]
  Tensor w_down, b_down, w_up, b_up;  // d -> b -> 2 L d (tanh between)
  bool flat = false;
  std::vector<Tensor> flat_kv;  // flat mode: per layer [p, 2d]
  std::size_t num_layers = 0;
  std::size_t hidden = 0;
};

std::size_t prefix_length(const PrefixParams& p);

/// [p, 2 L d] prefix states; layer l owns columns [2 l d, 2 l d + 2d), keys first.
/// Flat mode returns the trained tensors of every layer side by side.
Tensor prefix_states(const PrefixParams& p);

/// Prepends the layer's prefix keys/values (broadcast over rows) and extends the
/// key mask with ones. `gate` ([N] or undefined) scales the prefix rows per sample.
KeyValueExtension prefix_extend(const Tensor& keys, const Tensor& values, const Tensor& key_mask,
                                const Tensor& states, std::size_t layer, std::size_t hidden,
                                const Tensor& gate = {});

struct LoraParams {
  Tensor a;  // [in, r]
  Tensor b;  // [r, out], zero-initialized
  double alpha = 8.0;
  std::size_t rank = 8;
  bool merged = false;

  double scale() const { return alpha / static_cast<double>(rank); }
};

/// (alpha / r) x A B.
Tensor lora_delta(const Tensor& x, const LoraParams& p);

/// x W0 + b0 + (alpha / r) x A B. Throws StateError when already merged.
Tensor lora_forward(const Tensor& x, const Tensor& w0, const Tensor& b0, const LoraParams& p);

/// W0 += (alpha / r) A B in place; throws StateError if already merged.
void lora_merge(Tensor& w0, LoraParams& p);
/// W0 -= (alpha / r) A B in place; throws StateError if not merged.
void lora_unmerge(Tensor& w0, LoraParams& p);

/// h * scale over the last axis.
Tensor ia3_forward(const Tensor& h, const Tensor& scale);

/// Per-sample gate: mean over unmasked positions of sigmoid(x W_G). x [N, S, d],
/// weight [d, 1], mask [N, S] -> [N].
Tensor unipelt_gate(const Tensor& x, const Tensor& weight, const Tensor& mask);

}  // namespace adapters
