// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "adapters/hooks.hpp"
#include "adapters/model_dims.hpp"
#include "adapters/ops.hpp"
#include "json.hpp"

namespace adapters {

enum class Placement { kSequential, kParallel, kDouble };

struct BottleneckConfig {
  std::size_t reduction_factor = 16;
  Placement placement = Placement::kSequential;
  Activation nonlinearity = Activation::kRelu;
  bool with_invertible = false;
  /// Coupling sub-networks map d/2 -> (d/2)/inv_reduction_factor -> d/2.
  std::size_t inv_reduction_factor = 2;
  double scaling = 1.0;
  friend bool operator==(const BottleneckConfig&, const BottleneckConfig&) = default;
};

struct PromptTuningConfig {
  std::size_t prompt_length = 10;
  friend bool operator==(const PromptTuningConfig&, const PromptTuningConfig&) = default;
};

struct PrefixTuningConfig {
  std::size_t prefix_length = 30;
  std::size_t bottleneck_size = 512;
  /// Train per-layer P^K, P^V directly instead of through the MLP.
  bool flat = false;
  friend bool operator==(const PrefixTuningConfig&, const PrefixTuningConfig&) = default;
};

/// Bottleneck adapter (double placement) whose projections are PHM layers.
struct CompacterConfig {
  std::size_t reduction_factor = 16;
  std::size_t phm_dim = 4;
  std::size_t factor_rank = 1;
  bool share_a_globally = true;
  Activation nonlinearity = Activation::kRelu;
  friend bool operator==(const CompacterConfig&, const CompacterConfig&) = default;
};

struct LoraConfig {
  std::size_t r = 8;
  double alpha = 8.0;
  bool target_query = true;
  bool target_value = true;
  friend bool operator==(const LoraConfig&, const LoraConfig&) = default;
};

struct Ia3Config {
  bool keys = true;
  bool values = true;
  bool intermediate = true;
  friend bool operator==(const Ia3Config&, const Ia3Config&) = default;
};

struct AdapterConfig;

/// Ordered combination of single-method configs. With `gated`, every member gets
/// a per-layer sigmoid gate scaling its contribution.
struct UnionConfig {
  std::vector<AdapterConfig> members;
  bool gated = false;
  friend bool operator==(const UnionConfig&, const UnionConfig&);
};

struct AdapterConfig {
  std::variant<BottleneckConfig, PromptTuningConfig, PrefixTuningConfig, CompacterConfig,
               LoraConfig, Ia3Config, UnionConfig>
      method;

  AdapterConfig() = default;
  template <typename T>
    requires(!std::is_same_v<std::decay_t<T>, AdapterConfig> &&
             std::is_constructible_v<decltype(method), T>)
  AdapterConfig(T m) : method(std::move(m)) {}  // NOLINT(google-explicit-constructor)

  template <typename T>
  bool is() const { return std::holds_alternative<T>(method); }
  template <typename T>
  const T& as() const { return std::get<T>(method); }

  friend bool operator==(const AdapterConfig&, const AdapterConfig&) = default;
};

inline bool operator==(const UnionConfig& a, const UnionConfig& b) {
  return a.gated == b.gated && a.members == b.members;
}

/// Names accepted by parse_config.
std::vector<std::string> config_names();

/// Parses a config string: a preset name with optional overrides, e.g.
/// "seq_bn", "lora[r=16,alpha=32]", "prefix_tuning[prefix_length=5]", a
/// '+'-joined ungated union ("prefix_tuning+par_bn"), or "mam" / "unipelt".
AdapterConfig parse_config(std::string_view spec);

/// Canonical string with every hyperparameter spelled out; parses back to an equal config.
std::string config_to_string(const AdapterConfig& config);

/// Short method name: "seq_bn", "lora", ..., "union".
std::string method_name(const AdapterConfig& config);

nlohmann::json config_to_json(const AdapterConfig& config);
AdapterConfig config_from_json(const nlohmann::json& j);

/// Throws ConfigError if the config cannot be instantiated on `dims`.
void validate_config(const AdapterConfig& config, const ModelDims& dims);

/// Hook points a config injects into (deduplicated, in HookPoint order).
std::vector<HookPoint> config_hooks(const AdapterConfig& config);

/// Exact number of trainable scalars the config adds on `dims`, computed
/// without allocating anything.
std::size_t count_params(const AdapterConfig& config, const ModelDims& dims);

std::string_view activation_name(Activation f);
Activation parse_activation(std::string_view text);

}  // namespace adapters
