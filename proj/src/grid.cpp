// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "adapters/checkpoint.hpp"
#include "adapters/composition.hpp"
#include "adapters/config.hpp"
#include "adapters/errors.hpp"
#include "adapters/model.hpp"
#include "adapters/train.hpp"

namespace adapters {

namespace {

std::string_view preset_of(std::string_view config) {
  return config.substr(0, config.find('['));
}

constexpr ReferenceCount kReference[] = {
    {"double_seq_bn", 461'088, 14'183'424},
    {"seq_bn", 230'544, 7'091'712},
    {"par_bn", 230'544, 7'091'712},
    {"compacter", 58'816, 69'184},
    {"prefix_tuning", 636'704, 10'002'944},
    {"lora", 147'456, 7'372'800},
    {"ia3", 55'296, 55'296},
};

std::string metric_name_for(TaskKind kind) {
  return metric_higher_is_better(kind) ? "accuracy" : "mse";
}

std::size_t labels_for(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::kParity: return 2;
    case TaskKind::kMaskedSum: return 1;
    case TaskKind::kTagging: return spec.num_labels;
  }
  return 2;
}

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

nlohmann::json nan_as_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<GridAxis> default_axes(std::string_view method) {
  const std::string_view m = preset_of(method);
  if (m == "seq_bn" || m == "double_seq_bn" || m == "par_bn" || m == "seq_bn_inv" ||
      m == "double_seq_bn_inv" || m == "par_bn_inv") {
    return {{"reduction_factor", {2, 16, 64}}};
  }
  if (m == "compacter") return {{"reduction_factor", {4, 16}}, {"phm_dim", {4, 8}}};
  if (m == "prefix_tuning") {
    return {{"bottleneck_size", {32, 128, 512}}, {"prefix_length", {5, 50, 200}}};
  }
  if (m == "lora") return {{"r", {4, 8, 16, 64, 200}}};
  return {};
}

GridSpec default_grid(std::string_view method) {
  GridSpec g;
  g.axes = default_axes(method);
  return g;
}

std::vector<GridCell> grid_cells(std::string_view base, const std::vector<GridAxis>& axes) {
  std::vector<GridCell> cells{{std::string(base), nlohmann::json::object()}};
  for (const GridAxis& axis : axes) {
    if (axis.values.empty()) throw ConfigError("grid axis '" + axis.name + "' has no values");
    std::vector<GridCell> next;
    for (const GridCell& cell : cells) {
      for (std::size_t v : axis.values) {
        GridCell c = cell;
        const std::string opt = axis.name + "=" + std::to_string(v);
        if (!c.config.empty() && c.config.back() == ']') {
          c.config.insert(c.config.size() - 1, "," + opt);
        } else {
          c.config += "[" + opt + "]";
        }
        c.axes[axis.name] = v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

CountRange count_grid(std::string_view method, const ModelDims& dims) {
  CountRange r;
  r.method = std::string(method);
  for (const GridCell& cell : grid_cells(method, default_axes(method))) {
    const std::size_t n = count_params(parse_config(cell.config), dims);
    if (r.cells == 0 || n < r.min) {
      r.min = n;
      r.min_config = cell.config;
    }
    if (r.cells == 0 || n > r.max) {
      r.max = n;
      r.max_config = cell.config;
    }
    ++r.cells;
  }
  return r;
}

std::span<const ReferenceCount> reference_counts() { return kReference; }

std::vector<CheckLine> check_reference_counts() {
  const ModelDims dims = ModelDims::roberta_base();
  std::vector<CheckLine> out;
  for (const ReferenceCount& ref : kReference) {
    const CountRange range = count_grid(ref.method, dims);
    for (const bool is_max : {false, true}) {
      CheckLine line;
      line.method = std::string(ref.method);
      line.bound = is_max ? "max" : "min";
      line.expected = is_max ? ref.max : ref.min;
      line.actual = is_max ? range.max : range.min;
      line.config = is_max ? range.max_config : range.min_config;
      line.pass = line.expected == line.actual;
      if (!line.pass) {
        for (const GridCell& cell : grid_cells(ref.method, default_axes(ref.method))) {
          if (count_params(parse_config(cell.config), dims) == line.expected) {
            line.expected_at.push_back(cell.config);
          }
        }
      }
      out.push_back(std::move(line));
    }
  }
  return out;
}

nlohmann::json record_to_json(const RunRecord& r) {
  return {{"task", r.task},
          {"method", r.method},
          {"config", r.config},
          {"axes", r.axes},
          {"lr", r.lr},
          {"epochs", r.epochs},
          {"seed", r.seed},
          {"metric_name", r.metric_name},
          {"metric", nan_as_null(r.metric)},
          {"train_loss", nan_as_null(r.train_loss)},
          {"n_params", r.n_params},
          {"seconds", r.seconds},
          {"diverged", r.diverged},
          {"full_ft", r.full_ft}};
}

RunRecord record_from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.task = j.at("task").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.config = j.at("config").get<std::string>();
    r.axes = j.at("axes");
    if (!r.axes.is_object()) throw FormatError("record field 'axes' must be an object");
    r.lr = j.at("lr").get<double>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metric_name = j.at("metric_name").get<std::string>();
    r.metric = number_or_nan(j.at("metric"));
    r.train_loss = number_or_nan(j.at("train_loss"));
    r.n_params = j.at("n_params").get<std::size_t>();
    r.seconds = j.at("seconds").get<double>();
    r.diverged = j.at("diverged").get<bool>();
    r.full_ft = j.at("full_ft").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid report record: ") + e.what());
  }
}

std::string csv_header() {
  return "task,method,config,axes,lr,epochs,seed,metric_name,metric,train_loss,n_params,seconds,"
         "diverged,full_ft";
}

std::string to_csv_row(const RunRecord& r) {
  std::ostringstream os;
  os.precision(17);
  auto num = [&](double v) {
    if (std::isfinite(v)) os << v;
  };
  os << csv_escape(r.task) << ',' << csv_escape(r.method) << ',' << csv_escape(r.config) << ','
     << csv_escape(r.axes.dump()) << ',';
  num(r.lr);
  os << ',' << r.epochs << ',' << r.seed << ',' << r.metric_name << ',';
  num(r.metric);
  os << ',';
  num(r.train_loss);
  os << ',' << r.n_params << ',';
  num(r.seconds);
  os << ',' << (r.diverged ? "true" : "false") << ',' << (r.full_ft ? "true" : "false");
  return os.str();
}

std::vector<RunRecord> run_cell(const CellRun& cell) {
  if (cell.data == nullptr) throw ContractError("run_cell: no task data");
  if (cell.epochs.empty()) throw ConfigError("grid needs at least one epoch count");
  const TaskSpec& spec = cell.data->spec;
  if (spec.vocab > cell.dims.vocab) throw ConfigError("task vocabulary exceeds the encoder's");

  AdapterModel model(cell.dims, cell.seed);
  const std::string name = "task";
  if (!cell.full_ft) model.add_adapter(name, cell.config);
  model.add_prediction_head(name, head_kind_for(spec.kind), labels_for(spec));
  if (cell.full_ft) {
    model.train_full_model();
  } else {
    model.train_adapter(parse_composition(name));
  }

  TrainOptions opt;
  opt.lr = cell.lr;
  opt.epochs = *std::max_element(cell.epochs.begin(), cell.epochs.end());
  opt.eval_at = cell.epochs;
  opt.seed = cell.seed;
  const TrainResult result = train(model, *cell.data, name, opt);
  if (cell.save_dir) {
    if (cell.full_ft) {
      save_base_model(model, *cell.save_dir);
    } else {
      save_adapter(model, name, *cell.save_dir);
    }
  }

  RunRecord base;
  base.task = std::string(task_kind_name(spec.kind));
  base.method = cell.full_ft ? "full" : std::string(preset_of(cell.config));
  base.config = cell.full_ft ? "" : config_to_string(model.adapter(name).config());
  base.axes = cell.axes;
  base.lr = cell.lr;
  base.seed = cell.seed;
  base.metric_name = metric_name_for(spec.kind);
  base.n_params = result.trainable_params;
  base.full_ft = cell.full_ft;

  std::vector<RunRecord> out;
  for (std::size_t e : cell.epochs) {
    RunRecord r = base;
    r.epochs = e;
    const auto it = std::find_if(result.checkpoints.begin(), result.checkpoints.end(),
                                 [&](const EpochRecord& c) { return c.epoch == e; });
    if (it != result.checkpoints.end() && std::isfinite(it->eval.metric)) {
      r.metric = it->eval.metric;
      r.train_loss = it->train_loss;
      r.seconds = it->seconds;
    } else {
      r.metric = r.train_loss = std::numeric_limits<double>::quiet_NaN();
      r.seconds = result.seconds;
      r.diverged = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

void run_grid(const TaskData& data, const ModelDims& dims, std::string_view base_config,
              const GridSpec& grid, std::uint64_t seed, const RecordSink& sink,
              std::vector<std::string>* skipped) {
  if (grid.learning_rates.empty()) throw ConfigError("grid needs at least one learning rate");
  if (grid.full_ft) {
    for (double lr : grid.learning_rates) {
      CellRun run;
      run.data = &data;
      run.dims = dims;
      run.full_ft = true;
      run.lr = lr;
      run.epochs = grid.epochs;
      run.seed = seed;
      for (const RunRecord& r : run_cell(run)) sink(r);
    }
    return;
  }
  for (const GridCell& cell : grid_cells(base_config, grid.axes)) {
    try {
      validate_config(parse_config(cell.config), dims);
    } catch (const ConfigError& e) {
      if (skipped) skipped->push_back(cell.config + ": " + e.what());
      continue;
    }
    for (double lr : grid.learning_rates) {
      CellRun run;
      run.data = &data;
      run.dims = dims;
      run.config = cell.config;
      run.lr = lr;
      run.epochs = grid.epochs;
      run.seed = seed;
      run.axes = cell.axes;
      for (const RunRecord& r : run_cell(run)) sink(r);
    }
  }
}

const RunRecord* best_record(std::span<const RunRecord> records) {
  const RunRecord* best = nullptr;
  for (const RunRecord& r : records) {
    if (r.diverged || !std::isfinite(r.metric)) continue;
    const bool higher = r.metric_name != "mse";
    if (best == nullptr || (higher ? r.metric > best->metric : r.metric < best->metric)) {
      best = &r;
    }
  }
  return best;
}

}  // namespace adapters
