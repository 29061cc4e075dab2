// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adapters/adapter.hpp"
#include "adapters/composition.hpp"
#include "adapters/encoder.hpp"
#include "adapters/fusion.hpp"

namespace adapters {

/// Adapters, fusion layers and prediction heads by unique name, plus the
/// active and training setups.
class AdapterRegistry {
 public:
  bool contains(const std::string& name) const { return adapters_.contains(name); }
  const Adapter& adapter(const std::string& name) const;
  Adapter& adapter(const std::string& name);
  std::vector<std::string> adapter_names() const;
  void add(Adapter adapter);
  void remove(const std::string& name);

  bool has_fusion(const std::string& key) const { return fusions_.contains(key); }
  const FusionLayer& fusion(const std::string& key) const;
  void add_fusion(FusionLayer layer);
  void remove_fusion(const std::string& key);
  const std::map<std::string, FusionLayer>& fusions() const noexcept { return fusions_; }

  bool has_head(const std::string& name) const { return heads_.contains(name); }
  const PredictionHead& head(const std::string& name) const;
  void add_head(PredictionHead head);
  void remove_head(const std::string& name);
  const std::map<std::string, PredictionHead>& heads() const noexcept { return heads_; }

  const std::optional<CompositionNode>& active() const noexcept { return active_; }
  const std::optional<CompositionNode>& training() const noexcept { return training_; }
  void set_active(std::optional<CompositionNode> setup) { active_ = std::move(setup); }
  void set_training(std::optional<CompositionNode> setup) { training_ = std::move(setup); }

 private:
  std::map<std::string, Adapter> adapters_;
  std::map<std::string, FusionLayer> fusions_;
  std::map<std::string, PredictionHead> heads_;
  std::optional<CompositionNode> active_;
  std::optional<CompositionNode> training_;
};

}  // namespace adapters
