// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "adapters/errors.hpp"
#include "adapters/random.hpp"

namespace adapters {

namespace {

// Parity sequences place 0-3 copies of token 1 among filler tokens >= 2.
constexpr int kParityToken = 1;
constexpr int kMaxParityCount = 3;

struct Example {
  std::vector<int> ids;
  std::vector<double> mask;
  int label = 0;
  double target = 0;
};

Example parity_example(const TaskSpec& spec, Rng& rng) {
  Example ex;
  std::uniform_int_distribution<int> count(0, kMaxParityCount);
  std::uniform_int_distribution<int> filler(2, static_cast<int>(spec.vocab) - 1);
  const int c = std::min<int>(count(rng), static_cast<int>(spec.seq));
  ex.ids.resize(spec.seq);
  for (auto& id : ex.ids) id = filler(rng);
  std::vector<std::size_t> pos(spec.seq);
  std::iota(pos.begin(), pos.end(), 0);
  std::shuffle(pos.begin(), pos.end(), rng);
  for (int k = 0; k < c; ++k) ex.ids[pos[k]] = kParityToken;
  ex.mask.assign(spec.seq, 1.0);
  ex.label = c % 2;
  return ex;
}

// Token value v(t) = (t mod 4) / 3; target is its mean over real positions.
Example masked_sum_example(const TaskSpec& spec, Rng& rng) {
  Example ex;
  std::uniform_int_distribution<int> token(1, static_cast<int>(spec.vocab) - 1);
  std::uniform_int_distribution<std::size_t> length(std::max<std::size_t>(1, spec.seq / 2),
                                                    spec.seq);
  const std::size_t n = length(rng);
  ex.ids.assign(spec.seq, 0);
  ex.mask.assign(spec.seq, 0.0);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ex.ids[i] = token(rng);
    ex.mask[i] = 1.0;
    total += (ex.ids[i] % 4) / 3.0;
  }
  ex.target = total / static_cast<double>(n);
  return ex;
}

Example tagging_example(const TaskSpec& spec, Rng& rng) {
  Example ex;
  std::uniform_int_distribution<int> token(0, static_cast<int>(spec.vocab) - 1);
  ex.ids.resize(spec.seq);
  for (auto& id : ex.ids) id = token(rng);
  ex.mask.assign(spec.seq, 1.0);
  return ex;
}

void append(Dataset& d, const Example& ex, const TaskSpec& spec) {
  d.ids.insert(d.ids.end(), ex.ids.begin(), ex.ids.end());
  d.mask.insert(d.mask.end(), ex.mask.begin(), ex.mask.end());
  switch (spec.kind) {
    case TaskKind::kParity: d.labels.push_back(ex.label); break;
    case TaskKind::kMaskedSum: d.targets.push_back(ex.target); break;
    case TaskKind::kTagging:
      for (std::size_t i = 0; i < spec.seq; ++i) {
        d.tags.push_back(static_cast<int>(i % spec.num_labels));
      }
      break;
  }
}

std::string key_of(const std::vector<int>& ids) {
  return std::string(reinterpret_cast<const char*>(ids.data()), ids.size() * sizeof(int));
}

}  // namespace

std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kParity: return "parity";
    case TaskKind::kMaskedSum: return "masked-sum";
    case TaskKind::kTagging: return "tagging";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view text) {
  for (TaskKind k : {TaskKind::kParity, TaskKind::kMaskedSum, TaskKind::kTagging}) {
    if (task_kind_name(k) == text) return k;
  }
  throw ConfigError("unknown task '" + std::string(text) +
                    "' (valid: parity, masked-sum, tagging)");
}

HeadKind head_kind_for(TaskKind kind) {
  switch (kind) {
    case TaskKind::kParity: return HeadKind::kClassification;
    case TaskKind::kMaskedSum: return HeadKind::kRegression;
    case TaskKind::kTagging: return HeadKind::kTagging;
  }
  return HeadKind::kClassification;
}

TokenBatch Dataset::batch(const std::vector<std::size_t>& rows) const {
  TokenBatch tb;
  tb.batch = rows.size();
  tb.seq = seq;
  tb.ids.reserve(rows.size() * seq);
  tb.mask.reserve(rows.size() * seq);
  for (auto r : rows) {
    tb.ids.insert(tb.ids.end(), ids.begin() + r * seq, ids.begin() + (r + 1) * seq);
    tb.mask.insert(tb.mask.end(), mask.begin() + r * seq, mask.begin() + (r + 1) * seq);
  }
  return tb;
}

TaskData make_task(const TaskSpec& spec) {
  if (spec.seq == 0 || spec.train_samples == 0) throw ConfigError("task needs seq and samples");
  if (spec.vocab < 3) throw ConfigError("task vocabulary must hold at least 3 tokens");
  if (spec.kind == TaskKind::kTagging && spec.num_labels < 2) {
    throw ConfigError("tagging task needs at least 2 labels");
  }
  TaskData data{spec, {}, {}};
  data.train.seq = data.eval.seq = spec.seq;
  Rng rng = derived_rng(spec.seed, "task/" + std::string(task_kind_name(spec.kind)));
  std::unordered_set<std::string> seen;
  const std::size_t total = spec.train_samples + spec.eval_samples;
  std::size_t attempts = 0;
  while (seen.size() < total) {
    if (++attempts > 50 * total) {
      throw ConfigError("task space too small for " + std::to_string(total) +
                        " distinct examples");
    }
    Example ex = spec.kind == TaskKind::kParity      ? parity_example(spec, rng)
                 : spec.kind == TaskKind::kMaskedSum ? masked_sum_example(spec, rng)
                                                     : tagging_example(spec, rng);
    if (!seen.insert(key_of(ex.ids)).second) continue;
    append(seen.size() <= spec.train_samples ? data.train : data.eval, ex, spec);
  }
  return data;
}

}  // namespace adapters
