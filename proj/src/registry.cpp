// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/registry.hpp"

#include "adapters/errors.hpp"

namespace adapters {

namespace {

template <class Map>
std::string known(const Map& map) {
  std::string out;
  for (const auto& [k, v] : map) out += (out.empty() ? "" : ", ") + k;
  return out.empty() ? "none" : out;
}

}  // namespace

const Adapter& AdapterRegistry::adapter(const std::string& name) const {
  auto it = adapters_.find(name);
  if (it == adapters_.end()) {
    throw LookupError("no adapter named '" + name + "' (registered: " + known(adapters_) + ")");
  }
  return it->second;
}

Adapter& AdapterRegistry::adapter(const std::string& name) {
  return const_cast<Adapter&>(std::as_const(*this).adapter(name));
}

std::vector<std::string> AdapterRegistry::adapter_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : adapters_) out.push_back(k);
  return out;
}

void AdapterRegistry::add(Adapter adapter) {
  const std::string name = adapter.name();
  if (name.empty()) throw RegistryError("adapter names must not be empty");
  if (adapters_.contains(name)) throw RegistryError("adapter '" + name + "' already exists");
  adapters_.emplace(name, std::move(adapter));
}

void AdapterRegistry::remove(const std::string& name) {
  if (adapters_.erase(name) == 0) throw LookupError("no adapter named '" + name + "'");
}

const FusionLayer& AdapterRegistry::fusion(const std::string& key) const {
  auto it = fusions_.find(key);
  if (it == fusions_.end()) {
    throw LookupError("no fusion layer '" + key + "' (registered: " + known(fusions_) + ")");
  }
  return it->second;
}

void AdapterRegistry::add_fusion(FusionLayer layer) {
  const std::string key = fusion_key(layer.members);
  if (fusions_.contains(key)) throw RegistryError("fusion layer '" + key + "' already exists");
  fusions_.emplace(key, std::move(layer));
}

void AdapterRegistry::remove_fusion(const std::string& key) {
  if (fusions_.erase(key) == 0) throw LookupError("no fusion layer '" + key + "'");
}

const PredictionHead& AdapterRegistry::head(const std::string& name) const {
  auto it = heads_.find(name);
  if (it == heads_.end()) {
    throw LookupError("no prediction head '" + name + "' (registered: " + known(heads_) + ")");
  }
  return it->second;
}

void AdapterRegistry::add_head(PredictionHead head) {
  const std::string name = head.name;
  if (heads_.contains(name)) throw RegistryError("prediction head '" + name + "' already exists");
  heads_.emplace(name, std::move(head));
}

void AdapterRegistry::remove_head(const std::string& name) {
  if (heads_.erase(name) == 0) throw LookupError("no prediction head '" + name + "'");
}

}  // namespace adapters
