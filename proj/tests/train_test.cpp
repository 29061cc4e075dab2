// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "adapters/errors.hpp"
#include "adapters/ops.hpp"
#include "adapters/train.hpp"

namespace adapters {
namespace {

TaskData tiny(TaskKind kind = TaskKind::kParity) {
  TaskSpec s;
  s.kind = kind;
  s.seq = 8;
  s.train_samples = 64;
  s.eval_samples = 32;
  s.seed = 5;
  return make_task(s);
}

AdapterModel with_adapter(const std::string& config, TaskKind kind = TaskKind::kParity) {
  AdapterModel m(ModelDims::desk(), 11);
  m.add_adapter("t", config);
  m.add_prediction_head("t", head_kind_for(kind), kind == TaskKind::kMaskedSum ? 1 : 2);
  m.train_adapter(parse_composition("t"));
  return m;
}

TEST(AdamTest, FirstStepMovesEachCoordinateByLr) {
  // With bias correction the first update is lr * g / (|g| + eps).
  Tensor x({3});
  x.values()[0] = 1;
  x.values()[1] = -2;
  x.values()[2] = 0.5;
  x.set_requires_grad(true);
  Adam adam({{"x", x}}, {0.1});
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(mul(x, x)));
  }
  adam.step();
  EXPECT_NEAR(x.values()[0], 0.9, 1e-9);
  EXPECT_NEAR(x.values()[1], -1.9, 1e-9);
  EXPECT_NEAR(x.values()[2], 0.4, 1e-9);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(AdamTest, MinimizesAQuadratic) {
  Tensor x({2});
  x.values()[0] = 3;
  x.values()[1] = -4;
  x.set_requires_grad(true);
  Adam adam({{"x", x}}, {0.05});
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(sum(mul(x, x)));
    }
    adam.step();
    adam.zero_grad();
  }
  EXPECT_LT(std::abs(x.values()[0]), 1e-2);
  EXPECT_LT(std::abs(x.values()[1]), 1e-2);
}

TEST(TrainTest, TenStepsChangeEveryTrainableTensorAndNoFrozenOne) {
  const TaskData data = tiny();
  for (const auto& config : config_names()) {
    AdapterModel m = with_adapter(config);
    const std::uint64_t theta = checksum(m.base_parameters());
    std::vector<std::vector<double>> before;
    const NamedTensors phi = m.trainable_parameters();
    for (const auto& [n, t] : phi) before.emplace_back(t.values().begin(), t.values().end());

    TrainOptions o;
    o.epochs = 10;
    o.max_steps = 10;
    const TrainResult r = train(m, data, "t", o);
    EXPECT_EQ(r.steps, 10u) << config;
    EXPECT_EQ(checksum(m.base_parameters()), theta) << config;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      const auto v = phi[i].second.values();
      EXPECT_FALSE(std::equal(v.begin(), v.end(), before[i].begin()))
          << config << " " << phi[i].first << " did not change";
    }
  }
}

TEST(TrainTest, SameSeedReproducesAndShorterRunIsAPrefix) {
  const TaskData data = tiny();
  TrainOptions o;
  o.epochs = 3;
  o.eval_at = {1, 2};
  AdapterModel a = with_adapter("lora");
  AdapterModel b = with_adapter("lora");
  const TrainResult ra = train(a, data, "t", o);
  const TrainResult rb = train(b, data, "t", o);
  ASSERT_EQ(ra.checkpoints.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ra.checkpoints[i].eval.loss, rb.checkpoints[i].eval.loss);
    EXPECT_EQ(ra.checkpoints[i].train_loss, rb.checkpoints[i].train_loss);
  }
  o.epochs = 2;
  o.eval_at = {};
  AdapterModel c = with_adapter("lora");
  const TrainResult rc = train(c, data, "t", o);
  EXPECT_EQ(rc.checkpoints.back().eval.loss, ra.checkpoints[1].eval.loss);
  EXPECT_EQ(rc.checkpoints.back().eval.metric, ra.checkpoints[1].eval.metric);
}

TEST(TrainTest, FullFineTuningLowersTrainingLossOnEveryTask) {
  for (TaskKind k : {TaskKind::kParity, TaskKind::kMaskedSum, TaskKind::kTagging}) {
    const TaskData data = tiny(k);
    AdapterModel m(ModelDims::desk(), 2);
    m.add_prediction_head("t", head_kind_for(k), k == TaskKind::kMaskedSum ? 1 : 2);
    m.train_full_model();
    TrainOptions o;
    o.lr = 1e-3;
    o.epochs = 6;
    o.eval_at = {1};
    const TrainResult r = train(m, data, "t", o);
    EXPECT_LT(r.checkpoints.back().train_loss, r.checkpoints.front().train_loss)
        << task_kind_name(k);
    EXPECT_GT(r.trainable_params, 100000u);
  }
}

TEST(TrainTest, MetricsFollowTheirDefinitions) {
  // A zero head predicts class 0 everywhere and 0 for regression.
  for (TaskKind k : {TaskKind::kParity, TaskKind::kMaskedSum, TaskKind::kTagging}) {
    const TaskData data = tiny(k);
    AdapterModel m(ModelDims::desk(), 2);
    m.add_prediction_head("t", head_kind_for(k), k == TaskKind::kMaskedSum ? 1 : 2);
    for (auto& [n, t] : m.all_parameters()) {
      if (n.rfind("heads.", 0) == 0) std::fill(t.values().begin(), t.values().end(), 0.0);
    }
    const Evaluation e = evaluate(m, data.eval, "t");
    double expected = 0;
    if (k == TaskKind::kParity) {
      for (int l : data.eval.labels) expected += l == 0;
      expected /= static_cast<double>(data.eval.size());
      EXPECT_NEAR(e.loss, std::log(2.0), 1e-12);
    } else if (k == TaskKind::kMaskedSum) {
      for (double t : data.eval.targets) expected += t * t;
      expected /= static_cast<double>(data.eval.size());
    } else {
      expected = 0.5;  // even positions carry tag 0 and seq is even
    }
    EXPECT_NEAR(e.metric, expected, 1e-12) << task_kind_name(k);
  }
}

TEST(TrainTest, DivergenceIsRecordedNotThrown) {
  const TaskData data = tiny();
  AdapterModel m = with_adapter("seq_bn");
  for (auto& [n, t] : m.all_parameters()) {
    if (n == "heads.t.bias") t.values()[0] = NAN;
  }
  TrainOptions o;
  o.epochs = 5;
  TrainResult r;
  ASSERT_NO_THROW(r = train(m, data, "t", o));
  EXPECT_TRUE(r.diverged);
  EXPECT_LT(r.checkpoints.back().epoch, 5u);
  EXPECT_TRUE(std::isnan(r.checkpoints.back().eval.metric));
}

TEST(TrainTest, NothingTrainableIsAStateError) {
  const TaskData data = tiny();
  AdapterModel m(ModelDims::desk(), 2);
  m.add_prediction_head("t", HeadKind::kClassification, 2);
  EXPECT_THROW(train(m, data, "t", {}), StateError);
}

}  // namespace
}  // namespace adapters
