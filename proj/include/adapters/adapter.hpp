// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adapters/config.hpp"
#include "adapters/encoder.hpp"
#include "adapters/methods.hpp"
#include "adapters/random.hpp"

namespace adapters {

/// Modules one method places in one encoder layer.
struct LayerModules {
  std::optional<BottleneckParams> post_attn;
  std::optional<BottleneckParams> post_ffn;
  std::optional<BottleneckParams> parallel;
  std::optional<LoraParams> lora_query;
  std::optional<LoraParams> lora_value;
  Tensor ia3_keys, ia3_values, ia3_intermediate;  // undefined when not targeted
  Tensor gate;                                     // [d, 1] in gated unions
};

/// Parameters of one single-method config.
struct MethodInstance {
  AdapterConfig config;
  bool gated = false;
  std::vector<LayerModules> layers;
  std::optional<InvertibleParams> invertible;
  Tensor prompt;  // [p, d]
  std::optional<PrefixParams> prefix;
  std::vector<Tensor> phm_rule;  // shared Compacter factors
};

/// An allocated adapter: a named config plus its parameter tensors (Phi).
///
/// Unions hold one MethodInstance per member; single configs hold one.
/// Parameter tensors are shared handles, so writes through parameters()
/// update the adapter in place.
class Adapter {
 public:
  Adapter(std::string name, AdapterConfig config, const ModelDims& dims, Rng& rng);

  const std::string& name() const noexcept { return name_; }
  const AdapterConfig& config() const noexcept { return config_; }
  const ModelDims& dims() const noexcept { return dims_; }
  std::vector<MethodInstance>& members() noexcept { return members_; }
  const std::vector<MethodInstance>& members() const noexcept { return members_; }

  /// Every trainable tensor under a stable name, each shared tensor listed once.
  NamedTensors parameters() const;
  std::size_t num_parameters() const;
  void set_trainable(bool trainable) const;

  bool has_hook(HookPoint hook) const { return hooks_.contains(hook); }
  const std::set<HookPoint>& hooks() const noexcept { return hooks_; }
  std::size_t prompt_length() const;
  std::size_t prefix_length() const;
  /// Single bottleneck or Compacter method without an invertible part.
  bool is_pure_bottleneck() const;

  // Hook application; `src`, `h`, `mask` follow the AdapterHooks contract.
  Tensor transform(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h,
                   const Tensor& mask) const;
  /// Additive change a pure bottleneck adapter makes at a residual hook
  /// (undefined if it has no module there).
  Tensor delta(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h) const;
  SequenceExtension prepend(const Tensor& embedded, const Tensor& mask) const;
  Tensor boundary(const Tensor& x, bool inverse) const;
  KeyValueExtension extend_kv(std::size_t layer, const Tensor& keys, const Tensor& values,
                              const Tensor& key_mask, const Tensor& gate_src,
                              const Tensor& query_mask) const;

  bool has_lora() const;
  bool merged() const;
  /// Folds every LoRA path into the encoder's query/value weights. Merged LoRA
  /// modules are skipped by transform().
  void merge_into(EncoderWeights& weights);
  void unmerge_from(EncoderWeights& weights);

 private:
  Tensor member_delta(const MethodInstance& m, HookPoint hook, std::size_t layer,
                      const Tensor& src, const Tensor& h, const Tensor& mask) const;

  std::string name_;
  AdapterConfig config_;
  ModelDims dims_;
  std::vector<MethodInstance> members_;
  std::set<HookPoint> hooks_;
};

}  // namespace adapters
