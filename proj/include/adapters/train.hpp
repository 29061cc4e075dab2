// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adapters/model.hpp"
#include "adapters/tasks.hpp"

namespace adapters {

/// Adam over a fixed list of tensors (bias-corrected, no weight decay).
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(NamedTensors params, Options options);

  /// Applies one update from the current gradients. Tensors without a
  /// gradient are left untouched.
  void step();
  void zero_grad();
  std::size_t steps() const noexcept { return t_; }

 private:
  NamedTensors params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// FNV-1a over tensor names and value bytes; detects any change to a set.
std::uint64_t checksum(const NamedTensors& tensors);

/// Scalar training loss for a task, from the logits of one branch.
Tensor task_loss(const Tensor& logits, const Dataset& data, const std::vector<std::size_t>& rows);

struct Evaluation {
  double metric = 0;  // accuracy (parity, tagging) or mean squared error (masked sum)
  double loss = 0;
};

/// `head` selects the output used for every example.
Evaluation evaluate(const AdapterModel& model, const Dataset& data, const std::string& head,
                    std::size_t batch_size = 64);

/// Larger is better for accuracy; smaller is better for mean squared error.
bool metric_higher_is_better(TaskKind kind);

struct TrainOptions {
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  /// Epoch counts (<= epochs) after which the eval metric is recorded.
  std::vector<std::size_t> eval_at;
  /// Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;  // mean over the epoch's batches
  Evaluation eval;
  double seconds = 0;     // wall time from the start of training to this checkpoint
};

struct TrainResult {
  std::vector<EpochRecord> checkpoints;  // one per eval_at entry (and the final epoch)
  double final_train_loss = 0;
  bool diverged = false;                 // a non-finite loss stopped training
  std::size_t steps = 0;
  std::size_t trainable_params = 0;
  double seconds = 0;
};

/// Trains the model's trainable tensors on `data.train` with Adam and reports
/// the eval metric at each requested epoch. Batches are drawn from a shuffle
/// seeded by (seed, epoch), so a shorter run is exactly a prefix of a longer one.
TrainResult train(AdapterModel& model, const TaskData& data, const std::string& head,
                  const TrainOptions& options);

}  // namespace adapters
