// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adapters/composition.hpp"
#include "adapters/hooks.hpp"
#include "adapters/registry.hpp"

namespace adapters {

/// Executes a validated composition tree as encoder hooks for one forward pass.
///
/// Parallel blocks multiply the rows: the encoder replicates the input batch
/// once per branch (branch-major, row = branch * B + sample), and every block
/// routes each row by the branch it belongs to.
class Router final : public AdapterHooks {
 public:
  /// Choice made at each Parallel node on one branch.
  using Branch = std::map<const CompositionNode*, std::size_t>;

  /// `batch` is the number of input samples. The tree is copied.
  Router(const AdapterRegistry& registry, const CompositionNode& root, std::size_t batch);
  Router(const Router&) = delete;
  Router& operator=(const Router&) = delete;

  std::size_t branch_count() const override { return branches_.size(); }
  bool active_at(HookPoint hook) const override;

  SequenceExtension prepend(const Tensor& embedded, const Tensor& mask) override;
  Tensor boundary(const Tensor& x, const Tensor& mask, bool inverse) override;
  Tensor transform(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h,
                   const Tensor& mask) override;
  KeyValueExtension extend_kv(std::size_t layer, const Tensor& keys, const Tensor& values,
                              const Tensor& key_mask, const Tensor& gate_src,
                              const Tensor& query_mask) override;

  const std::vector<Branch>& branches() const noexcept { return branches_; }
  /// Leaves a branch passes through, in application order.
  std::vector<std::string> branch_leaves(std::size_t branch) const;
  /// Last leaf on the branch with a registered head of the same name.
  std::optional<std::string> branch_head(std::size_t branch) const;

  /// Distinct runtime warnings, in first-seen order.
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  using Rows = std::vector<std::size_t>;

  Tensor run(const CompositionNode& node, const Rows& rows, HookPoint hook, std::size_t layer,
             const Tensor& src, const Tensor& h, const Tensor& mask);
  SequenceExtension run_prepend(const CompositionNode& node, const Rows& rows, const Tensor& x,
                                const Tensor& mask);
  Tensor run_boundary(const CompositionNode& node, const Rows& rows, const Tensor& x,
                      bool inverse);
  KeyValueExtension run_kv(const CompositionNode& node, const Rows& rows, std::size_t layer,
                           const Tensor& keys, const Tensor& values, const Tensor& key_mask,
                           const Tensor& gate_src, const Tensor& query_mask);

  /// Partition of `rows` (local positions) by child index for Parallel/BatchSplit.
  std::vector<std::vector<std::size_t>> partition(const CompositionNode& node, const Rows& rows);
  void warn(std::string message);

  const AdapterRegistry& registry_;
  CompositionNode root_;  // branches_ key on its node addresses
  std::size_t batch_;
  std::vector<Branch> branches_;
  std::vector<std::string> warnings_;
};

}  // namespace adapters
