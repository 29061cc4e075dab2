// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapters/model_dims.hpp"
#include "adapters/tasks.hpp"
#include "json.hpp"

namespace adapters {

struct GridAxis {
  std::string name;  // config option, e.g. "reduction_factor"
  std::vector<std::size_t> values;
};

struct GridSpec {
  std::vector<double> learning_rates{1e-5, 1e-4, 5e-4, 1e-3};
  std::vector<std::size_t> epochs{5, 10, 20, 30};
  std::vector<GridAxis> axes;
  /// Train the whole encoder and head without an adapter; `axes` are ignored.
  bool full_ft = false;
};

/// Method-specific axes of the standard search space; empty for methods
/// without tunable size (ia3, prompt_tuning, unions).
std::vector<GridAxis> default_axes(std::string_view method);
GridSpec default_grid(std::string_view method);

struct GridCell {
  std::string config;   // parseable config string
  nlohmann::json axes;  // {"reduction_factor": 2, ...}
};

/// Cartesian product of `axes` applied as overrides to `base` (a config
/// string, possibly with its own overrides). One cell when `axes` is empty.
std::vector<GridCell> grid_cells(std::string_view base, const std::vector<GridAxis>& axes);

// ------------------------------------------------------------ parameter audit

struct CountRange {
  std::string method;
  std::size_t min = 0, max = 0;
  std::string min_config, max_config;
  std::size_t cells = 0;
};

/// Min/max added parameters over the method's default axes on `dims`.
CountRange count_grid(std::string_view method, const ModelDims& dims);

/// Published min/max added parameters on roberta-base dims.
struct ReferenceCount {
  std::string_view method;
  std::size_t min, max;
};
std::span<const ReferenceCount> reference_counts();

struct CheckLine {
  std::string method;
  std::string bound;  // "min" or "max"
  std::size_t expected = 0, actual = 0;
  std::string config;  // grid cell attaining `actual`
  bool pass = false;
  /// On mismatch, the grid cells (if any) whose count equals `expected`.
  std::vector<std::string> expected_at;
};

/// Compares every reference extreme with count_grid on roberta-base dims.
std::vector<CheckLine> check_reference_counts();

// ------------------------------------------------------------ training grid

/// One line-delimited report record. Schema (all keys required):
///   task, method, config, axes (object), lr, epochs, seed, metric_name,
///   metric (number or null when diverged), train_loss (number or null),
///   n_params, seconds, diverged, full_ft
struct RunRecord {
  std::string task;
  std::string method;
  std::string config;
  nlohmann::json axes = nlohmann::json::object();
  double lr = 0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::string metric_name;
  double metric = 0;
  double train_loss = 0;
  std::size_t n_params = 0;
  double seconds = 0;
  bool diverged = false;
  bool full_ft = false;
};

nlohmann::json record_to_json(const RunRecord& r);
/// Throws FormatError when a key is missing or has the wrong type.
RunRecord record_from_json(const nlohmann::json& j);

std::string csv_header();
std::string to_csv_row(const RunRecord& r);

struct CellRun {
  TaskData const* data = nullptr;
  ModelDims dims = ModelDims::desk();
  std::string config;  // ignored when full_ft
  bool full_ft = false;
  double lr = 1e-3;
  std::vector<std::size_t> epochs{5, 10, 20, 30};
  std::uint64_t seed = 0;
  nlohmann::json axes = nlohmann::json::object();
  /// After training, save the adapter "task" with its head (or, for full
  /// fine-tuning, the whole model) here.
  std::optional<std::filesystem::path> save_dir;
};

/// Trains one (config, lr) cell once for max(epochs) and returns a record per
/// epoch count. Because each epoch's shuffle depends only on (seed, epoch) and
/// the learning rate is constant, the record at epoch e is identical to a
/// separate e-epoch run.
std::vector<RunRecord> run_cell(const CellRun& cell);

using RecordSink = std::function<void(const RunRecord&)>;

/// Runs every (cell, lr) combination, or one run per lr when grid.full_ft. Cells that cannot be instantiated on
/// `dims` are skipped and reported through `skipped`.
void run_grid(const TaskData& data, const ModelDims& dims, std::string_view base_config,
              const GridSpec& grid, std::uint64_t seed, const RecordSink& sink,
              std::vector<std::string>* skipped = nullptr);

/// Record with the best metric (respecting the task's direction); diverged
/// records never win. Returns nullptr for an empty or all-diverged list.
const RunRecord* best_record(std::span<const RunRecord> records);

}  // namespace adapters
