// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "adapters/errors.hpp"
#include "adapters/ops.hpp"
#include "adapters/random.hpp"

namespace adapters {

Adam::Adam(NamedTensors params, Options options) : params_(std::move(params)), opt_(options) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    if (!t.has_grad()) continue;
    const std::span<const double> g = std::as_const(t).grad();
    std::span<double> x = t.values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1 - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1 - opt_.beta2) * g[i] * g[i];
      x[i] -= opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) t.clear_grad();
}

std::uint64_t checksum(const NamedTensors& tensors) {
  std::string bytes;
  for (const auto& [name, t] : tensors) {
    bytes += name;
    bytes.push_back('\0');
    const std::span<const double> v = t.values();
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  return fnv1a(bytes);
}

namespace {

TaskKind kind_of(const Dataset& d) {
  if (!d.labels.empty()) return TaskKind::kParity;
  if (!d.targets.empty()) return TaskKind::kMaskedSum;
  return TaskKind::kTagging;
}

// Tagging loss and accuracy count real tokens only.
std::vector<int> tag_labels(const Dataset& d, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  for (auto r : rows) {
    for (std::size_t i = 0; i < d.seq; ++i) {
      out.push_back(d.mask[r * d.seq + i] > 0 ? d.tags[r * d.seq + i] : -1);
    }
  }
  return out;
}

std::size_t argmax_row(std::span<const double> v, std::size_t row, std::size_t width) {
  const auto begin = v.begin() + row * width;
  return static_cast<std::size_t>(std::max_element(begin, begin + width) - begin);
}

}  // namespace

Tensor task_loss(const Tensor& logits, const Dataset& data, const std::vector<std::size_t>& rows) {
  switch (kind_of(data)) {
    case TaskKind::kParity: {
      std::vector<int> labels;
      for (auto r : rows) labels.push_back(data.labels[r]);
      return cross_entropy(logits, labels);
    }
    case TaskKind::kMaskedSum: {
      Tensor target({rows.size(), 1});
      for (std::size_t i = 0; i < rows.size(); ++i) target.values()[i] = data.targets[rows[i]];
      return mse(logits, target);
    }
    case TaskKind::kTagging: {
      const std::size_t c = logits.dim(2);
      return cross_entropy(reshape(logits, {rows.size() * data.seq, c}), tag_labels(data, rows));
    }
  }
  throw ContractError("task_loss: unknown task");
}

bool metric_higher_is_better(TaskKind kind) { return kind != TaskKind::kMaskedSum; }

Evaluation evaluate(const AdapterModel& model, const Dataset& data, const std::string& head,
                    std::size_t batch_size) {
  NoGradScope no_grad;
  const TaskKind kind = kind_of(data);
  double loss_sum = 0, metric_sum = 0;
  std::size_t metric_count = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> rows(std::min(batch_size, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor logits = model.forward(data.batch(rows), head).logits(0);
    loss_sum += task_loss(logits, data, rows).item() * static_cast<double>(rows.size());
    const std::span<const double> v = logits.values();
    switch (kind) {
      case TaskKind::kParity:
        for (std::size_t i = 0; i < rows.size(); ++i) {
          metric_sum += static_cast<int>(argmax_row(v, i, logits.dim(1))) == data.labels[rows[i]];
        }
        metric_count += rows.size();
        break;
      case TaskKind::kMaskedSum:
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double e = v[i] - data.targets[rows[i]];
          metric_sum += e * e;
        }
        metric_count += rows.size();
        break;
      case TaskKind::kTagging: {
        const std::vector<int> tags = tag_labels(data, rows);
        const std::size_t c = logits.dim(2);
        for (std::size_t i = 0; i < tags.size(); ++i) {
          if (tags[i] < 0) continue;
          metric_sum += static_cast<int>(argmax_row(v, i, c)) == tags[i];
          ++metric_count;
        }
        break;
      }
    }
  }
  return {metric_count ? metric_sum / static_cast<double>(metric_count) : 0.0,
          data.size() ? loss_sum / static_cast<double>(data.size()) : 0.0};
}

TrainResult train(AdapterModel& model, const TaskData& data, const std::string& head,
                  const TrainOptions& options) {
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  const NamedTensors params = model.trainable_parameters();
  if (params.empty()) throw StateError("nothing to train: no tensor requires a gradient");
  for (const auto& [n, t] : params) result.trainable_params += t.numel();

  Adam adam(params, {options.lr});
  std::vector<std::size_t> eval_at = options.eval_at;
  eval_at.push_back(options.epochs);
  std::sort(eval_at.begin(), eval_at.end());
  eval_at.erase(std::unique(eval_at.begin(), eval_at.end()), eval_at.end());

  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= options.epochs && !result.diverged; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = derived_rng(options.seed, "epoch/" + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      if (options.max_steps && result.steps >= options.max_steps) break;
      const std::vector<std::size_t> rows(
          order.begin() + start, order.begin() + std::min(n, start + options.batch_size));
      Tape tape;
      double loss_value = 0;
      {
        TapeScope scope(tape);
        const Tensor loss =
            task_loss(model.forward(data.train.batch(rows), head).logits(0), data.train, rows);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          result.diverged = true;
          break;
        }
        tape.backward(loss);
      }
      adam.step();
      adam.zero_grad();
      loss_sum += loss_value;
      ++batches;
      ++result.steps;
    }
    result.final_train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (std::binary_search(eval_at.begin(), eval_at.end(), epoch) || result.diverged) {
      EpochRecord rec{epoch, result.final_train_loss, {},
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
      rec.eval = result.diverged ? Evaluation{NAN, NAN} : evaluate(model, data.eval, head);
      result.checkpoints.push_back(rec);
    }
  }
  // Parameters may still carry gradients from an aborted step.
  adam.zero_grad();
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace adapters
