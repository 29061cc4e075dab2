// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "adapters/checkpoint.hpp"
#include "adapters/composition.hpp"
#include "adapters/config.hpp"
#include "adapters/errors.hpp"
#include "adapters/grid.hpp"
#include "adapters/model.hpp"
#include "adapters/tasks.hpp"
#include "adapters/train.hpp"
#include "json.hpp"

namespace adapters::cli {

namespace {

using nlohmann::json;

// Flags shared by the commands that build a model.
struct ModelFlags {
  std::string dims;  // empty: from the checkpoint, else desk
  std::uint64_t seed = 0;
  std::string base;  // base model checkpoint directory

  void add_to(CLI::App* app) {
    app->add_option("--dims", dims, "desk | roberta-base-dims | L=..,d=..,H=..,ff=..,V=..");
    app->add_option("--seed", seed, "seed of the base encoder (and of tasks and training)");
    app->add_option("--base", base, "base model checkpoint directory (overrides --dims/--seed)");
  }

  AdapterModel build(const std::vector<std::string>& adapter_dirs) const {
    if (!base.empty()) return load_base_model(base);
    ModelDims d = ModelDims::desk();
    if (!dims.empty()) {
      d = ModelDims::parse(dims);
    } else if (!adapter_dirs.empty()) {
      d = adapter_checkpoint_dims(adapter_dirs.front());
    }
    return AdapterModel(d, seed);
  }
};

struct TaskFlags {
  std::string task = "parity";
  std::size_t seq = 32;
  std::size_t train_samples = 4000;
  std::size_t eval_samples = 1000;
  std::size_t vocab = 16;
  std::size_t num_labels = 2;

  void add_to(CLI::App* app) {
    app->add_option("--task", task, "parity | masked-sum | tagging");
    app->add_option("--seq", seq, "sequence length");
    app->add_option("--train-samples", train_samples);
    app->add_option("--eval-samples", eval_samples);
    app->add_option("--vocab", vocab, "token ids used by the task");
    app->add_option("--num-labels", num_labels, "tagging labels");
  }

  TaskData make(std::uint64_t seed) const {
    TaskSpec s;
    s.kind = parse_task_kind(task);
    s.seq = seq;
    s.train_samples = train_samples;
    s.eval_samples = eval_samples;
    s.vocab = vocab;
    s.num_labels = num_labels;
    s.seed = seed;
    return make_task(s);
  }
};

std::string with_commas(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

// ------------------------------------------------------------ count-params

int check_paper(std::ostream& out) {
  bool ok = true;
  for (const CheckLine& l : check_reference_counts()) {
    out << (l.pass ? "PASS " : "FAIL ") << std::left << std::setw(14) << l.method << ' '
        << l.bound << "  expected " << std::right << std::setw(10) << with_commas(l.expected)
        << "  got " << std::setw(10) << with_commas(l.actual) << "  at " << l.config << '\n';
    for (const std::string& c : l.expected_at) {
      out << "     " << with_commas(l.expected) << " is attained by " << c << '\n';
    }
    ok = ok && l.pass;
  }
  out << (ok ? "all reference counts match\n" : "reference count mismatch\n");
  return ok ? kExitOk : kExitCheckFailed;
}

int count_params_cmd(const std::vector<std::string>& configs, const std::string& dims_text,
                     bool check, std::ostream& out) {
  const ModelDims dims = ModelDims::parse(dims_text.empty() ? "desk" : dims_text);
  std::vector<std::string> list = configs;
  if (list.empty() && !check) {
    for (const ReferenceCount& r : reference_counts()) list.emplace_back(r.method);
  }
  for (const std::string& c : list) {
    const AdapterConfig cfg = parse_config(c);  // validates before counting
    if (c.find('[') == std::string::npos && !default_axes(c).empty()) {
      const CountRange r = count_grid(c, dims);
      out << std::left << std::setw(16) << c << " cells " << r.cells << "  min "
          << with_commas(r.min) << " (" << r.min_config << ")  max " << with_commas(r.max)
          << " (" << r.max_config << ")\n";
    } else {
      out << std::left << std::setw(16) << c << ' ' << with_commas(count_params(cfg, dims))
          << '\n';
    }
  }
  return check ? check_paper(out) : kExitOk;
}

// ------------------------------------------------------------ train

struct TrainFlags {
  std::string config;
  bool full_ft = false;
  bool grid = false;
  std::vector<double> lrs;
  std::vector<std::size_t> epochs;
  std::string out_dir;
};

int train_cmd(const TrainFlags& f, const TaskFlags& tf, const ModelFlags& mf, std::ostream& out,
              std::ostream& err) {
  if (f.full_ft == !f.config.empty()) {
    throw ConfigError("train needs exactly one of --config or --full-ft");
  }
  const ModelDims dims = ModelDims::parse(mf.dims.empty() ? "desk" : mf.dims);
  if (!f.full_ft) validate_config(parse_config(f.config), dims);

  GridSpec grid;
  grid.full_ft = f.full_ft;
  if (!f.lrs.empty()) grid.learning_rates = f.lrs;
  if (!f.epochs.empty()) grid.epochs = f.epochs;
  if (f.grid && !f.full_ft) grid.axes = default_axes(f.config);
  const std::size_t runs =
      grid.learning_rates.size() * (grid.axes.empty() ? 1 : grid_cells(f.config, grid.axes).size());

  const TaskData data = tf.make(mf.seed);
  std::ofstream jsonl, csv;
  if (!f.out_dir.empty()) {
    fs::create_directories(f.out_dir);
    jsonl.open(fs::path(f.out_dir) / "records.jsonl");
    csv.open(fs::path(f.out_dir) / "records.csv");
    csv << csv_header() << '\n';
  }
  std::vector<RunRecord> records;
  auto sink = [&](const RunRecord& r) {
    const std::string line = record_to_json(r).dump();
    out << line << '\n';
    if (jsonl.is_open()) {
      jsonl << line << '\n';
      csv << to_csv_row(r) << '\n';
    }
    records.push_back(r);
  };

  std::vector<std::string> skipped;
  if (runs == 1 && !f.out_dir.empty()) {
    // A single run also leaves its trained checkpoint behind.
    CellRun run;
    run.data = &data;
    run.dims = dims;
    run.config = f.config;
    run.full_ft = f.full_ft;
    run.lr = grid.learning_rates.front();
    run.epochs = grid.epochs;
    run.seed = mf.seed;
    run.save_dir = fs::path(f.out_dir) / "checkpoint";
    for (const RunRecord& r : run_cell(run)) sink(r);
  } else {
    run_grid(data, dims, f.config, grid, mf.seed, sink, &skipped);
  }
  for (const std::string& s : skipped) err << "skipped cell " << s << '\n';
  if (const RunRecord* best = best_record(records)) {
    err << "best " << best->metric_name << ' ' << best->metric << " at "
        << (best->full_ft ? std::string("full fine-tuning") : best->config) << " lr " << best->lr
        << " epochs " << best->epochs << '\n';
  } else if (!records.empty()) {
    err << "every run diverged\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------ eval

std::string single_head(const AdapterModel& model) {
  const auto& heads = model.registry().heads();
  if (heads.size() != 1) {
    throw LookupError("eval needs a checkpoint with exactly one prediction head (found " +
                      std::to_string(heads.size()) + ")");
  }
  return heads.begin()->first;
}

int eval_cmd(const std::string& adapter_dir, const TaskFlags& tf, const ModelFlags& mf,
             std::ostream& out) {
  std::vector<std::string> dirs;
  if (!adapter_dir.empty()) dirs.push_back(adapter_dir);
  AdapterModel model = mf.build(dirs);
  std::string head;
  if (!adapter_dir.empty()) {
    head = load_adapter(model, adapter_dir);
    model.set_active(CompositionNode::leaf(head));
    if (!model.registry().has_head(head)) head = single_head(model);
  } else {
    head = single_head(model);
  }
  const TaskData data = tf.make(mf.seed);
  const Evaluation e = evaluate(model, data.eval, head);
  out << json{{"task", tf.task},
              {"metric_name", metric_higher_is_better(data.spec.kind) ? "accuracy" : "mse"},
              {"metric", e.metric},
              {"loss", e.loss},
              {"n_eval", data.eval.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

// ------------------------------------------------------------ compose

TokenBatch read_input(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot read input file '" + file + "'");
  json j;
  try {
    in >> j;
    TokenBatch tb;
    const auto ids = j.at("ids").get<std::vector<std::vector<int>>>();
    if (ids.empty()) throw InputError("input file has no sequences");
    tb.batch = ids.size();
    tb.seq = ids.front().size();
    for (const auto& row : ids) {
      if (row.size() != tb.seq) throw InputError("input sequences must share one length");
      tb.ids.insert(tb.ids.end(), row.begin(), row.end());
    }
    if (j.contains("mask")) {
      const auto mask = j.at("mask").get<std::vector<std::vector<double>>>();
      for (const auto& row : mask) tb.mask.insert(tb.mask.end(), row.begin(), row.end());
      if (tb.mask.size() != tb.ids.size()) throw InputError("mask must match ids");
    }
    return tb;
  } catch (const json::exception& e) {
    throw InputError("input file '" + file + "': " + e.what());
  }
}

void collect_fusions(const CompositionNode& node, std::vector<std::vector<std::string>>& out) {
  if (node.kind == BlockKind::kFuse) out.push_back(leaf_names(node));
  for (const auto& c : node.children) collect_fusions(c, out);
}

json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()},
          {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

int compose_cmd(const std::string& dsl, const std::vector<std::string>& adapter_dirs,
                const std::string& input, const ModelFlags& mf, std::ostream& out,
                std::ostream& err) {
  const CompositionNode root = parse_composition(dsl);
  AdapterModel model = mf.build(adapter_dirs);
  for (const std::string& dir : adapter_dirs) load_adapter(model, dir);
  std::vector<std::vector<std::string>> fusions;
  collect_fusions(root, fusions);
  for (const auto& members : fusions) {
    if (!model.registry().has_fusion(fusion_key(members))) {
      model.add_adapter_fusion(members);
      err << "note: fusion layer over " << fusion_key(members) << " is freshly initialised\n";
    }
  }
  model.set_active(root);
  const ModelOutput o = model.forward(read_input(input));
  json branches = json::array();
  for (const BranchOutput& b : o.branches) {
    json jb = {{"leaves", b.leaves}};
    jb["head"] = b.head ? json(*b.head) : json(nullptr);
    jb["logits"] = b.logits.defined() ? tensor_json(b.logits) : json(nullptr);
    branches.push_back(std::move(jb));
  }
  out << json{{"composition", to_string(root)}, {"warnings", o.warnings}, {"branches", branches}}
             .dump()
      << '\n';
  for (const std::string& w : o.warnings) err << "warning: " << w << '\n';
  return kExitOk;
}

// ------------------------------------------------------------ average / merge

int average_cmd(const std::vector<std::string>& dirs, const std::vector<double>& weights,
                std::string name, const std::string& out_dir, std::ostream& out) {
  if (dirs.empty()) throw ConfigError("average needs at least one --adapter");
  if (out_dir.empty()) throw ConfigError("average needs --out");
  AdapterModel model(adapter_checkpoint_dims(dirs.front()), 0);
  std::vector<std::string> sources;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    sources.push_back(load_adapter(model, dirs[i], "source" + std::to_string(i)));
  }
  if (name.empty()) name = adapter_checkpoint_name(dirs.front());
  model.average_adapter(name, sources, weights);

  // Heads are averaged too when every source carries a compatible one.
  const auto& reg = model.registry();
  const bool heads_match = std::all_of(sources.begin(), sources.end(), [&](const auto& s) {
    if (!reg.has_head(s)) return false;
    const PredictionHead& h = reg.head(s);
    const PredictionHead& h0 = reg.head(sources.front());
    return h.kind == h0.kind && h.num_labels == h0.num_labels;
  });
  if (heads_match) {
    const PredictionHead& h0 = reg.head(sources.front());
    PredictionHead head{name, h0.kind, h0.num_labels, Tensor(h0.weight.shape()),
                        Tensor(h0.bias.shape())};
    double total = 0;
    for (double w : weights) total += w;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const PredictionHead& h = reg.head(sources[i]);
      const double w = weights[i] / total;
      for (std::size_t k = 0; k < head.weight.numel(); ++k) {
        head.weight.values()[k] += w * h.weight.values()[k];
      }
      for (std::size_t k = 0; k < head.bias.numel(); ++k) {
        head.bias.values()[k] += w * h.bias.values()[k];
      }
    }
    model.add_prediction_head(std::move(head));
  }
  save_adapter(model, name, out_dir);
  out << json{{"name", name}, {"out", out_dir}, {"head", heads_match}}.dump() << '\n';
  return kExitOk;
}

int merge_cmd(const std::string& dir, const std::string& out_dir, const ModelFlags& mf,
              std::ostream& out) {
  if (dir.empty() || out_dir.empty()) throw ConfigError("merge needs --adapter and --out");
  AdapterModel model = mf.build({dir});
  const std::string name = load_adapter(model, dir);
  model.merge_adapter(name);
  save_base_model(model, out_dir);
  out << json{{"merged", name}, {"out", out_dir}}.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adapter training, composition and parameter audits"};
  app.require_subcommand(1);

  // count-params / check-paper
  std::vector<std::string> configs;
  std::string count_dims;
  bool check = false;
  auto* count = app.add_subcommand("count-params", "added parameters per config or grid");
  count->add_option("--config", configs, "config string(s); a bare preset counts its grid");
  count->add_option("--dims", count_dims, "dims preset (default desk)");
  count->add_flag("--check-paper", check, "compare grid extremes with the reference table");
  auto* checkp = app.add_subcommand("check-paper", "compare grid extremes with the reference table");

  // train
  TrainFlags tr;
  TaskFlags train_task;
  ModelFlags train_model;
  auto* train_app = app.add_subcommand("train", "train one config (or a grid) on a synthetic task");
  train_app->add_option("--config", tr.config, "adapter config string");
  train_app->add_flag("--full-ft", tr.full_ft, "fine-tune the whole encoder instead");
  train_app->add_flag("--grid", tr.grid, "sweep the method's standard hyperparameter axes");
  train_app->add_option("--lr", tr.lrs, "learning rate(s)")->delimiter(',');
  train_app->add_option("--epochs", tr.epochs, "epoch count(s)")->delimiter(',');
  train_app->add_option("--out", tr.out_dir, "directory for records (and a single run's checkpoint)");
  train_task.add_to(train_app);
  train_app->add_option("--dims", train_model.dims, "dims preset (default desk)");
  train_app->add_option("--seed", train_model.seed, "seed for encoder, task and training");

  // eval
  std::string eval_adapter;
  TaskFlags eval_task;
  ModelFlags eval_model;
  auto* eval_app = app.add_subcommand("eval", "evaluate a checkpoint on a task's eval split");
  eval_app->add_option("--adapter", eval_adapter, "adapter checkpoint directory");
  eval_task.add_to(eval_app);
  eval_model.add_to(eval_app);

  // compose
  std::string dsl, input;
  std::vector<std::string> compose_dirs;
  ModelFlags compose_model;
  auto* compose = app.add_subcommand("compose", "run a composition over loaded adapters");
  compose->add_option("--composition,--config", dsl, "block DSL, e.g. 'Stack(a, b)'")->required();
  compose->add_option("--adapter", compose_dirs, "adapter checkpoint directories");
  compose->add_option("--input", input, "JSON file {\"ids\": [[...]], \"mask\": [[...]]}")
      ->required();
  compose_model.add_to(compose);

  // average
  std::vector<std::string> avg_dirs;
  std::vector<double> avg_weights;
  std::string avg_name, avg_out;
  auto* average = app.add_subcommand("average", "weighted parameter average of adapters");
  average->add_option("--adapter", avg_dirs, "source checkpoints")->required();
  average->add_option("--weights", avg_weights, "one weight per source")->delimiter(',');
  average->add_option("--name", avg_name, "name of the result (default: first source's)");
  average->add_option("--out", avg_out, "output checkpoint directory")->required();

  // merge
  std::string merge_dir, merge_out;
  ModelFlags merge_model;
  auto* merge = app.add_subcommand("merge", "merge a LoRA adapter into the base weights");
  merge->add_option("--adapter", merge_dir, "LoRA checkpoint")->required();
  merge->add_option("--out", merge_out, "output base model directory")->required();
  merge_model.add_to(merge);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*count) return count_params_cmd(configs, count_dims, check, out);
    if (*checkp) return check_paper(out);
    if (*train_app) return train_cmd(tr, train_task, train_model, out, err);
    if (*eval_app) return eval_cmd(eval_adapter, eval_task, eval_model, out);
    if (*compose) return compose_cmd(dsl, compose_dirs, input, compose_model, out, err);
    if (*average) {
      if (avg_weights.empty()) avg_weights.assign(avg_dirs.size(), 1.0);
      return average_cmd(avg_dirs, avg_weights, avg_name, avg_out, out);
    }
    if (*merge) return merge_cmd(merge_dir, merge_out, merge_model, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace adapters::cli
