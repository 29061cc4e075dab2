// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace adapters {

class AdapterRegistry;

enum class BlockKind { kLeaf, kStack, kFuse, kSplit, kBatchSplit, kParallel, kAverage };

inline constexpr BlockKind kAllBlockKinds[] = {
    BlockKind::kLeaf,       BlockKind::kStack,    BlockKind::kFuse,    BlockKind::kSplit,
    BlockKind::kBatchSplit, BlockKind::kParallel, BlockKind::kAverage,
};

std::string_view block_name(BlockKind kind);

/// Routing tree over named adapters. Immutable once built; copied by value.
struct CompositionNode {
  BlockKind kind = BlockKind::kLeaf;
  std::string adapter;                   // Leaf
  std::vector<CompositionNode> children;
  std::vector<std::size_t> sizes;        // Split: token counts, BatchSplit: sample counts
  std::vector<double> weights;           // Average

  static CompositionNode leaf(std::string name);
  static CompositionNode stack(std::vector<CompositionNode> children);
  static CompositionNode fuse(std::vector<CompositionNode> children);
  static CompositionNode split(std::vector<CompositionNode> children, std::vector<std::size_t> sizes);
  static CompositionNode batch_split(std::vector<CompositionNode> children,
                                     std::vector<std::size_t> sizes);
  static CompositionNode parallel(std::vector<CompositionNode> children);
  static CompositionNode average(std::vector<CompositionNode> children, std::vector<double> weights);

  friend bool operator==(const CompositionNode&, const CompositionNode&) = default;
};

/// The nesting table. A Leaf may appear under any block; Stack, Parallel,
/// BatchSplit and Average may contain each other; Fuse and Split contain leaves only.
bool nesting_allowed(BlockKind parent, BlockKind child);

/// Parses the block DSL, e.g. `Stack(a, Parallel(b, c))`, `Split(g, h | 64, 64)`,
/// `Average(n, o, weights=[0.3, 0.7])`. A bare name is a Leaf. Throws
/// CompositionError naming the 1-based column of the problem.
CompositionNode parse_composition(std::string_view text);

/// Canonical DSL text; parses back to an equal tree.
std::string to_string(const CompositionNode& node);

/// Distinct leaf names in first-appearance order.
std::vector<std::string> leaf_names(const CompositionNode& node);

/// Key a fusion layer is stored under: member names joined by ','.
std::string fusion_key(const std::vector<std::string>& members);

struct InputShape {
  std::size_t batch = 0;
  std::size_t seq = 0;
};

/// Checks block arity and arithmetic, the nesting table, that every leaf is a
/// registered adapter, that each Fuse has a fusion layer, and which adapter
/// kinds a block admits. With `input`, also checks BatchSplit sums against the
/// batch and Split sums against the sequence. Throws on the first violation.
void validate_composition(const CompositionNode& node, const AdapterRegistry& registry,
                          std::optional<InputShape> input = std::nullopt);

}  // namespace adapters
