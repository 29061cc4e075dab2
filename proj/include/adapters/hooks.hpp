// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "adapters/tensor.hpp"

namespace adapters {

/// Locations in the encoder where adapter methods inject parameters.
enum class HookPoint {
  kEmbeddingBoundary,     // invertible adapters: forward on entry, inverse on exit
  kInputPrepend,          // prompt tuning
  kAttnKV,                // prefix tuning
  kAttnQProj,             // LoRA on the query projection
  kAttnVProj,             // LoRA on the value projection
  kAttnKeysScale,         // IA3
  kAttnValuesScale,       // IA3
  kFfnIntermediateScale,  // IA3
  kPostAttnResidual,      // bottleneck, double placement
  kPostFfnResidual,       // bottleneck, sequential and double placement
  kParallelToLayer,       // bottleneck, parallel placement
};

inline constexpr std::array<HookPoint, 11> kAllHookPoints = {
    HookPoint::kEmbeddingBoundary, HookPoint::kInputPrepend,      HookPoint::kAttnKV,
    HookPoint::kAttnQProj,         HookPoint::kAttnVProj,         HookPoint::kAttnKeysScale,
    HookPoint::kAttnValuesScale,   HookPoint::kFfnIntermediateScale,
    HookPoint::kPostAttnResidual,  HookPoint::kPostFfnResidual,   HookPoint::kParallelToLayer,
};

std::string_view hook_name(HookPoint hook);

/// Hidden states grown by prepended positions, with the matching mask.
struct SequenceExtension {
  Tensor hidden;  // [N, p + S, d]
  Tensor mask;    // [N, p + S]
};

/// Keys/values grown by prefix positions. Heads are packed along the last axis.
struct KeyValueExtension {
  Tensor keys;      // [N, p + Sk, d]
  Tensor values;    // [N, p + Sk, d]
  Tensor key_mask;  // [N, p + Sk]
};

/// Callback surface the encoder invokes at every hook point.
///
/// `transform` receives the hook's input `src` (the tensor the adapter reads)
/// and the tensor `h` it modifies, and returns the replacement for `h`:
///
///   kAttnQProj / kAttnVProj     src = LN'd attention input, h = projection output
///   kAttnKeysScale / kAttnValuesScale / kFfnIntermediateScale   src = h
///   kPostAttnResidual           src = h = attention output before the residual add
///   kPostFfnResidual            src = h = FFN output before the residual add
///   kParallelToLayer            src = block input, h = FFN output (after kPostFfnResidual)
///
/// `mask` is the [N, S] query mask, used for sequence pooling.
class AdapterHooks {
 public:
  virtual ~AdapterHooks() = default;

  /// Rows of every downstream tensor are this many copies of the input batch.
  virtual std::size_t branch_count() const { return 1; }

  virtual bool active_at(HookPoint hook) const = 0;

  virtual SequenceExtension prepend(const Tensor& embedded, const Tensor& mask) = 0;
  virtual Tensor boundary(const Tensor& x, const Tensor& mask, bool inverse) = 0;
  virtual Tensor transform(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h,
                           const Tensor& mask) = 0;
  /// `gate_src` is the LN'd attention input (for gated prefixes).
  virtual KeyValueExtension extend_kv(std::size_t layer, const Tensor& keys, const Tensor& values,
                                      const Tensor& key_mask, const Tensor& gate_src,
                                      const Tensor& query_mask) = 0;
};

}  // namespace adapters
