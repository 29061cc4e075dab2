// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adapters/composition.hpp"
#include "adapters/encoder.hpp"
#include "adapters/registry.hpp"

namespace adapters {

struct BranchOutput {
  std::vector<std::string> leaves;  // adapters the branch passes through
  std::optional<std::string> head;  // bound prediction head, if any
  Tensor logits;                    // undefined without a head
};

struct ModelOutput {
  EncoderState state;                // all branches, branch-major rows
  std::vector<BranchOutput> branches;
  std::vector<std::string> warnings;

  /// Logits of one branch; throws LookupError if no head is bound to it.
  const Tensor& logits(std::size_t branch = 0) const;
};

/// A frozen encoder (Θ) plus named adapters, fusion layers and heads (Φ).
///
/// Nothing is active after add_adapter(); set_active() or train_adapter()
/// selects a composition for subsequent forwards. Every tensor stays a shared
/// handle, so optimizers may hold them across calls.
class AdapterModel {
 public:
  AdapterModel(ModelDims dims, std::uint64_t seed);

  const ModelDims& dims() const noexcept { return encoder_.dims(); }
  std::uint64_t seed() const noexcept { return seed_; }
  TransformerEncoder& encoder() noexcept { return encoder_; }
  const TransformerEncoder& encoder() const noexcept { return encoder_; }
  const AdapterRegistry& registry() const noexcept { return registry_; }

  // Lifecycle.
  void add_adapter(const std::string& name, const AdapterConfig& config);
  void add_adapter(const std::string& name, std::string_view config);
  /// Registers an already-built adapter (e.g. one read from a checkpoint).
  void add_adapter(Adapter adapter);
  const Adapter& adapter(const std::string& name) const { return registry_.adapter(name); }
  Adapter& adapter(const std::string& name) { return registry_.adapter(name); }
  /// Releases the adapter's parameters; the name becomes reusable.
  void delete_adapter(const std::string& name);

  void add_adapter_fusion(const std::vector<std::string>& members);
  void delete_adapter_fusion(const std::vector<std::string>& members);

  void add_prediction_head(const std::string& name, HeadKind kind, std::size_t num_labels);
  void add_prediction_head(PredictionHead head);
  void delete_prediction_head(const std::string& name);

  // Setups.
  void set_active(std::optional<CompositionNode> setup);
  void set_active(std::string_view setup) { set_active(parse_composition(setup)); }
  const std::optional<CompositionNode>& active() const noexcept { return registry_.active(); }

  /// Freezes Θ and everything else, then unfreezes the setup's adapters,
  /// fusion layers and bound heads, and activates the setup. Fuse members
  /// stay frozen unless `train_fusion_members`.
  void train_adapter(const CompositionNode& setup, bool train_fusion_members = false);
  /// Full fine-tuning: Θ and every head trainable, no adapter active.
  void train_full_model();
  void freeze_all();

  /// New adapter whose every tensor is the normalized weighted sum of the
  /// sources' tensors. Sources must share one config.
  void average_adapter(const std::string& new_name, const std::vector<std::string>& sources,
                       const std::vector<double>& weights);
  void merge_adapter(const std::string& name);
  void unmerge_adapter(const std::string& name);

  /// Runs the encoder through the active setup and every bound head.
  /// `head`, when given, is applied to every branch.
  ModelOutput forward(const TokenBatch& tokens,
                      const std::optional<std::string>& head = std::nullopt) const;

  // Parameter inspection. Names are prefixed "base.", "adapters.<name>.",
  // "fusions.<key>." and "heads.<name>.".
  NamedTensors base_parameters() const;
  NamedTensors all_parameters() const;
  NamedTensors trainable_parameters() const;

 private:
  bool referenced(const std::string& adapter) const;

  TransformerEncoder encoder_;
  std::uint64_t seed_;
  AdapterRegistry registry_;
};

}  // namespace adapters
