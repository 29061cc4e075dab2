// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adapters/encoder.hpp"

namespace adapters {

enum class TaskKind {
  kParity,     // classification: (count of token 1) mod 2
  kMaskedSum,  // regression: mean token value over real positions
  kTagging,    // per-token label: position mod num_labels
};

std::string_view task_kind_name(TaskKind kind);
/// Accepts "parity", "masked-sum" and "tagging".
TaskKind parse_task_kind(std::string_view text);
HeadKind head_kind_for(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::kParity;
  std::size_t vocab = 16;       // tokens used; must fit the encoder vocabulary
  std::size_t seq = 32;
  std::size_t train_samples = 4000;
  std::size_t eval_samples = 1000;
  std::size_t num_labels = 2;   // tagging only; parity is binary, regression scalar
  std::uint64_t seed = 0;
};

/// Row-major examples. Exactly one label vector is filled, by kind:
/// `labels` [n] (parity), `targets` [n] (masked sum), `tags` [n * seq] (tagging).
struct Dataset {
  std::size_t seq = 0;
  std::vector<int> ids;
  std::vector<double> mask;  // 1 = real token
  std::vector<int> labels;
  std::vector<double> targets;
  std::vector<int> tags;

  std::size_t size() const { return seq == 0 ? 0 : ids.size() / seq; }
  /// Examples at `rows`, in that order.
  TokenBatch batch(const std::vector<std::size_t>& rows) const;
};

struct TaskData {
  TaskSpec spec;
  Dataset train;
  Dataset eval;
};

/// Deterministic in the spec. Train and eval never share a token sequence.
TaskData make_task(const TaskSpec& spec);

}  // namespace adapters
