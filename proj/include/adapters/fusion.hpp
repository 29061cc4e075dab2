// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adapters/adapter.hpp"
#include "adapters/hooks.hpp"
#include "adapters/random.hpp"
#include "adapters/tensor.hpp"

namespace adapters {

/// Attention projections of one fusion site, each [d, d].
struct FusionParams {
  Tensor query;
  Tensor key;
  Tensor value;
};

/// Attention over the outputs of a fixed, ordered adapter set:
///
///   s_i = softmax_i((q W_q) . (o_i W_k) / sqrt(d)),   out = residual + sum_i s_i (o_i W_v)
///
/// per token. `query` and every `outputs[i]` are [N, S, d].
Tensor fusion_attention(const Tensor& query, std::span<const Tensor> outputs,
                        const FusionParams& params, const Tensor& residual);

/// Fusion parameters for every (layer, hook) where a member has a module.
struct FusionLayer {
  std::vector<std::string> members;
  std::map<std::pair<std::size_t, HookPoint>, FusionParams> sites;

  /// W_q, W_k small random; W_v = I + small noise so the initial fusion is
  /// close to an average of the member outputs.
  static FusionLayer create(std::vector<std::string> members,
                            const std::vector<const Adapter*>& adapters, const ModelDims& dims,
                            Rng& rng);

  NamedTensors parameters() const;
  void set_trainable(bool trainable) const;
};

}  // namespace adapters
