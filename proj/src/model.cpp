// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/model.hpp"

#include <algorithm>
#include <set>

#include "adapters/errors.hpp"
#include "adapters/ops.hpp"
#include "adapters/router.hpp"

namespace adapters {

namespace {

void set_grad(const NamedTensors& tensors, bool flag) {
  for (const auto& [name, t] : tensors) {
    Tensor handle = t;
    handle.set_requires_grad(flag);
  }
}

NamedTensors head_tensors(const PredictionHead& head) {
  return {{"weight", head.weight}, {"bias", head.bias}};
}

void append(NamedTensors& out, const std::string& prefix, const NamedTensors& tensors) {
  for (const auto& [name, t] : tensors) out.emplace_back(prefix + name, t);
}

bool mentions(const CompositionNode& node, const std::string& adapter) {
  const auto names = leaf_names(node);
  return std::find(names.begin(), names.end(), adapter) != names.end();
}

}  // namespace

const Tensor& ModelOutput::logits(std::size_t branch) const {
  const BranchOutput& b = branches.at(branch);
  if (!b.logits.defined()) {
    throw LookupError("branch " + std::to_string(branch) +
                      " has no prediction head; add a head named after one of its adapters or "
                      "select one explicitly");
  }
  return b.logits;
}

AdapterModel::AdapterModel(ModelDims dims, std::uint64_t seed)
    : encoder_(std::move(dims), seed), seed_(seed) {
  freeze_all();
}

// ----------------------------------------------------------------- lifecycle

void AdapterModel::add_adapter(const std::string& name, const AdapterConfig& config) {
  if (registry_.contains(name)) throw RegistryError("adapter '" + name + "' already exists");
  Rng rng = derived_rng(seed_, "adapter/" + name);
  add_adapter(Adapter(name, config, dims(), rng));
}

void AdapterModel::add_adapter(const std::string& name, std::string_view config) {
  add_adapter(name, parse_config(config));
}

void AdapterModel::add_adapter(Adapter adapter) {
  if (adapter.dims() != dims()) {
    throw ShapeError("adapter '" + adapter.name() + "' was built for dims " +
                     adapter.dims().to_string() + ", model has " + dims().to_string());
  }
  adapter.set_trainable(false);
  registry_.add(std::move(adapter));
}

bool AdapterModel::referenced(const std::string& adapter) const {
  if (registry_.active() && mentions(*registry_.active(), adapter)) return true;
  if (registry_.training() && mentions(*registry_.training(), adapter)) return true;
  return false;
}

void AdapterModel::delete_adapter(const std::string& name) {
  const Adapter& a = registry_.adapter(name);  // LookupError if unknown
  if (referenced(name)) {
    throw StateError("adapter '" + name + "' is used by the active or training setup");
  }
  for (const auto& [key, fusion] : registry_.fusions()) {
    if (std::find(fusion.members.begin(), fusion.members.end(), name) != fusion.members.end()) {
      throw StateError("adapter '" + name + "' is a member of fusion layer '" + key + "'");
    }
  }
  if (a.merged()) throw StateError("adapter '" + name + "' is merged; unmerge it first");
  registry_.remove(name);
}

void AdapterModel::add_adapter_fusion(const std::vector<std::string>& members) {
  if (members.empty()) throw CompositionError("a fusion layer needs at least one adapter");
  std::vector<const Adapter*> adapters;
  for (const auto& m : members) {
    const Adapter& a = registry_.adapter(m);
    if (!a.is_pure_bottleneck()) {
      throw CompositionError("fusion members must be bottleneck adapters; '" + m + "' is " +
                             method_name(a.config()));
    }
    adapters.push_back(&a);
  }
  const std::string key = fusion_key(members);
  if (registry_.has_fusion(key)) throw RegistryError("fusion layer '" + key + "' already exists");
  Rng rng = derived_rng(seed_, "fusion/" + key);
  FusionLayer layer = FusionLayer::create(members, adapters, dims(), rng);
  layer.set_trainable(false);
  registry_.add_fusion(std::move(layer));
}

void AdapterModel::delete_adapter_fusion(const std::vector<std::string>& members) {
  const std::string key = fusion_key(members);
  for (const auto* setup : {&registry_.active(), &registry_.training()}) {
    if (!setup->has_value()) continue;
    bool used = false;
    auto walk = [&](auto&& self, const CompositionNode& n) -> void {
      if (n.kind == BlockKind::kFuse && fusion_key(leaf_names(n)) == key) used = true;
      for (const auto& c : n.children) self(self, c);
    };
    walk(walk, **setup);
    if (used) throw StateError("fusion layer '" + key + "' is used by the active setup");
  }
  registry_.remove_fusion(key);
}

void AdapterModel::add_prediction_head(const std::string& name, HeadKind kind,
                                       std::size_t num_labels) {
  if (registry_.has_head(name)) throw RegistryError("prediction head '" + name + "' already exists");
  Rng rng = derived_rng(seed_, "head/" + name);
  add_prediction_head(PredictionHead::create(name, kind, num_labels, dims().hidden, rng));
}

void AdapterModel::add_prediction_head(PredictionHead head) {
  if (head.weight.dim(0) != dims().hidden) {
    throw ShapeError("head '" + head.name + "' expects hidden size " +
                     std::to_string(head.weight.dim(0)) + ", model has " +
                     std::to_string(dims().hidden));
  }
  head.weight.set_requires_grad(false);
  head.bias.set_requires_grad(false);
  registry_.add_head(std::move(head));
}

void AdapterModel::delete_prediction_head(const std::string& name) { registry_.remove_head(name); }

// -------------------------------------------------------------------- setups

void AdapterModel::set_active(std::optional<CompositionNode> setup) {
  if (setup) validate_composition(*setup, registry_);
  registry_.set_active(std::move(setup));
}

void AdapterModel::freeze_all() {
  set_grad(all_parameters(), false);
}

void AdapterModel::train_adapter(const CompositionNode& setup, bool train_fusion_members) {
  validate_composition(setup, registry_);
  freeze_all();
  std::set<std::string> fused;
  auto walk = [&](auto&& self, const CompositionNode& n, bool in_fuse) -> void {
    if (n.kind == BlockKind::kLeaf) {
      if (!in_fuse || train_fusion_members) registry_.adapter(n.adapter).set_trainable(true);
      return;
    }
    if (n.kind == BlockKind::kFuse) registry_.fusion(fusion_key(leaf_names(n))).set_trainable(true);
    for (const auto& c : n.children) self(self, c, in_fuse || n.kind == BlockKind::kFuse);
  };
  walk(walk, setup, false);
  // Heads bound to any branch of the setup.
  Router router(registry_, setup, 1);
  for (std::size_t b = 0; b < router.branch_count(); ++b) {
    if (auto head = router.branch_head(b)) set_grad(head_tensors(registry_.head(*head)), true);
  }
  registry_.set_active(setup);
  registry_.set_training(setup);
}

void AdapterModel::train_full_model() {
  freeze_all();
  set_grad(base_parameters(), true);
  for (const auto& [name, head] : registry_.heads()) set_grad(head_tensors(head), true);
  registry_.set_active(std::nullopt);
  registry_.set_training(std::nullopt);
}

// ---------------------------------------------------------- parameter ops

void AdapterModel::average_adapter(const std::string& new_name,
                                   const std::vector<std::string>& sources,
                                   const std::vector<double>& weights) {
  if (sources.empty()) throw ConfigError("average_adapter needs at least one source");
  if (weights.size() != sources.size()) {
    throw ArithmeticError("average_adapter: " + std::to_string(sources.size()) + " sources but " +
                          std::to_string(weights.size()) + " weights");
  }
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) {
      throw ArithmeticError("average_adapter: weights must be finite and non-negative");
    }
    total += w;
  }
  if (total <= 0) throw ArithmeticError("average_adapter: weights sum to zero");
  if (registry_.contains(new_name)) throw RegistryError("adapter '" + new_name + "' already exists");

  const Adapter& first = registry_.adapter(sources.front());
  std::vector<NamedTensors> params;
  for (const auto& s : sources) {
    const Adapter& a = registry_.adapter(s);
    if (!(a.config() == first.config())) {
      throw ConfigError("cannot average '" + s + "' (" + config_to_string(a.config()) +
                        ") with '" + first.name() + "' (" + config_to_string(first.config()) +
                        "): configs differ");
    }
    if (a.merged()) throw StateError("adapter '" + s + "' is merged; unmerge it first");
    params.push_back(a.parameters());
  }
  Rng rng = derived_rng(seed_, "adapter/" + new_name);
  Adapter result(new_name, first.config(), dims(), rng);
  NamedTensors target = result.parameters();
  for (std::size_t t = 0; t < target.size(); ++t) {
    std::span<double> out = target[t].second.values();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const double w = weights[s] / total;
      if (w == 0) continue;
      const std::span<const double> in = std::as_const(params[s][t].second).values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * in[i];
    }
  }
  add_adapter(std::move(result));
}

void AdapterModel::merge_adapter(const std::string& name) {
  registry_.adapter(name).merge_into(encoder_.weights());
}

void AdapterModel::unmerge_adapter(const std::string& name) {
  registry_.adapter(name).unmerge_from(encoder_.weights());
}

// ------------------------------------------------------------------ forward

ModelOutput AdapterModel::forward(const TokenBatch& tokens,
                                  const std::optional<std::string>& head) const {
  ModelOutput out;
  std::optional<Router> router;
  const std::optional<CompositionNode> setup = registry_.active();
  if (setup) {
    validate_composition(*setup, registry_, InputShape{tokens.batch, tokens.seq});
    router.emplace(registry_, *setup, tokens.batch);
  }
  out.state = encoder_.encode(tokens, router ? &*router : nullptr);
  const std::size_t branches = out.state.branches;
  const std::size_t B = out.state.batch;
  for (std::size_t b = 0; b < branches; ++b) {
    BranchOutput bo;
    if (router) {
      bo.leaves = router->branch_leaves(b);
      bo.head = router->branch_head(b);
    }
    if (head) bo.head = *head;
    if (bo.head) {
      EncoderState view = out.state;
      if (branches > 1) {
        view.hidden = slice(out.state.hidden, 0, b * B, B);
        view.mask = slice(out.state.mask, 0, b * B, B);
        view.branches = 1;
      }
      bo.logits = pooled_logits(view, registry_.head(*bo.head));
    }
    out.branches.push_back(std::move(bo));
  }
  if (router) out.warnings = router->warnings();
  return out;
}

// --------------------------------------------------------------- inspection

NamedTensors AdapterModel::base_parameters() const {
  NamedTensors out;
  append(out, "base.", encoder_.named_parameters());
  return out;
}

NamedTensors AdapterModel::all_parameters() const {
  NamedTensors out = base_parameters();
  for (const auto& name : registry_.adapter_names()) {
    append(out, "adapters." + name + ".", registry_.adapter(name).parameters());
  }
  for (const auto& [key, fusion] : registry_.fusions()) {
    append(out, "fusions." + key + ".", fusion.parameters());
  }
  for (const auto& [name, head] : registry_.heads()) {
    append(out, "heads." + name + ".", head_tensors(head));
  }
  return out;
}

NamedTensors AdapterModel::trainable_parameters() const {
  NamedTensors out;
  for (auto& entry : all_parameters()) {
    if (entry.second.requires_grad()) out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace adapters
