// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "adapters/checkpoint.hpp"
#include "adapters/grid.hpp"
#include "cli.hpp"
#include "json.hpp"

namespace adapters {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("adapters_cli_" +
           std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string p(const std::string& rel) const { return (dir / rel).string(); }

  // Small task so each run takes well under a second.
  std::vector<std::string> task_flags(const std::string& seed = "3") const {
    return {"--task", "parity", "--seq", "8", "--train-samples", "64", "--eval-samples", "32",
            "--seed", seed};
  }

  // Trains for 2 epochs at lr 1e-3 unless `extra` overrides them.
  Result train(const std::string& config, const std::string& out,
               std::vector<std::string> extra = {}, const std::string& seed = "3") {
    std::vector<std::string> args{"train", "--config", config, "--out", p(out)};
    for (auto& a : task_flags(seed)) args.push_back(a);
    if (std::find(extra.begin(), extra.end(), "--lr") == extra.end()) {
      extra.insert(extra.end(), {"--lr", "1e-3", "--epochs", "2"});
    }
    for (auto& a : extra) args.push_back(a);
    return run(args);
  }

  void write_input() const {
    std::ofstream(dir / "in.json") << R"({"ids": [[1, 2, 3, 4], [5, 6, 7, 8]]})";
  }

  fs::path dir;
};

TEST_F(CliTest, UsageErrorsExitOneAndHelpExitsZero) {
  EXPECT_EQ(run({}).code, cli::kExitInvalid);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitInvalid);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run({"count-params", "--config", "seq_bn[reduction_factor=0]"}).code,
            cli::kExitInvalid);
  EXPECT_EQ(run({"count-params", "--dims", "L=0"}).code, cli::kExitInvalid);
}

TEST_F(CliTest, CountParams) {
  const Result r = run({"count-params", "--config", "prompt_tuning[prompt_length=16]"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("1,024"), std::string::npos) << r.out;
  const Result g = run({"count-params", "--config", "double_seq_bn", "--dims", "roberta-base-dims"});
  EXPECT_NE(g.out.find("min 461,088"), std::string::npos) << g.out;
  EXPECT_NE(g.out.find("max 14,183,424"), std::string::npos) << g.out;
}

TEST_F(CliTest, ReferenceCheckReportsTheCompacterMaximumMismatch) {
  for (const auto& args : {std::vector<std::string>{"check-paper"},
                           std::vector<std::string>{"count-params", "--check-paper"}}) {
    const Result r = run(args);
    EXPECT_EQ(r.code, cli::kExitCheckFailed);
    EXPECT_NE(r.out.find("FAIL compacter      max"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("69,184 is attained by compacter[reduction_factor=4,phm_dim=4]"),
              std::string::npos);
    EXPECT_NE(r.out.find("PASS lora           max"), std::string::npos);
  }
}

TEST_F(CliTest, TrainWritesSchemaValidRecordsDeterministically) {
  const Result a = train("seq_bn", "a");
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  const auto recs = lines(slurp(dir / "a" / "records.jsonl"));
  ASSERT_EQ(recs.size(), 1u);
  const RunRecord r = record_from_json(recs[0]);
  EXPECT_EQ(r.method, "seq_bn");
  EXPECT_EQ(r.epochs, 2u);
  EXPECT_EQ(r.seed, 3u);
  EXPECT_FALSE(r.full_ft);
  EXPECT_TRUE(fs::exists(dir / "a" / "checkpoint" / "adapter_config.json"));
  EXPECT_EQ(lines(a.out).size(), 1u);
  // Header plus one row.
  const std::string csv = slurp(dir / "a" / "records.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);

  const Result b = train("seq_bn", "b");
  const RunRecord r2 = record_from_json(lines(b.out)[0]);
  EXPECT_EQ(r2.metric, r.metric);
  EXPECT_EQ(r2.train_loss, r.train_loss);
}

TEST_F(CliTest, TrainGridAndFullFineTuning) {
  Result g = train("lora", "g", {"--grid", "--lr", "1e-4,1e-3", "--epochs", "1,2"});
  ASSERT_EQ(g.code, cli::kExitOk) << g.err;
  EXPECT_EQ(lines(g.out).size(), 5u * 2 * 2);
  EXPECT_FALSE(fs::exists(dir / "g" / "checkpoint"));
  EXPECT_NE(g.err.find("best accuracy"), std::string::npos);

  std::vector<std::string> args{"train", "--full-ft", "--lr", "1e-4", "--epochs", "1",
                                "--out", p("full")};
  for (auto& a : task_flags()) args.push_back(a);
  const Result f = run(args);
  ASSERT_EQ(f.code, cli::kExitOk) << f.err;
  const RunRecord r = record_from_json(lines(f.out)[0]);
  EXPECT_TRUE(r.full_ft);
  EXPECT_GT(r.n_params, 100000u);
  EXPECT_TRUE(fs::exists(dir / "full" / "checkpoint" / "model_config.json"));

  std::vector<std::string> eval{"eval", "--base", p("full/checkpoint")};
  for (auto& a : task_flags()) eval.push_back(a);
  const Result e = run(eval);
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  EXPECT_EQ(json::parse(e.out).at("metric").get<double>(), r.metric);

  EXPECT_EQ(run({"train", "--config", "lora", "--full-ft"}).code, cli::kExitInvalid);
  EXPECT_EQ(run({"train"}).code, cli::kExitInvalid);
}

TEST_F(CliTest, EvalOfTrainedAdapterReproducesItsRecord) {
  const Result t = train("ia3", "t");
  ASSERT_EQ(t.code, cli::kExitOk);
  std::vector<std::string> eval{"eval", "--adapter", p("t/checkpoint")};
  for (auto& a : task_flags()) eval.push_back(a);
  const Result e = run(eval);
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  // The checkpoint stores float32, so the metric matches and the loss agrees closely.
  EXPECT_EQ(json::parse(e.out).at("metric").get<double>(), lines(t.out)[0].at("metric"));
}

TEST_F(CliTest, MergedEvalEqualsUnmergedEval) {
  ASSERT_EQ(train("lora", "l").code, cli::kExitOk);
  ASSERT_EQ(run({"merge", "--adapter", p("l/checkpoint"), "--out", p("merged"), "--seed", "3"}).code,
            cli::kExitOk);
  std::vector<std::string> unmerged{"eval", "--adapter", p("l/checkpoint")};
  std::vector<std::string> merged{"eval", "--base", p("merged")};
  for (auto& a : task_flags()) {
    unmerged.push_back(a);
    merged.push_back(a);
  }
  const json u = json::parse(run(unmerged).out);
  const json m = json::parse(run(merged).out);
  EXPECT_NEAR(m.at("metric").get<double>(), u.at("metric").get<double>(), 1e-8);
  EXPECT_NEAR(m.at("loss").get<double>(), u.at("loss").get<double>(), 1e-6);

  EXPECT_EQ(train("seq_bn", "s").code, cli::kExitOk);
  EXPECT_EQ(run({"merge", "--adapter", p("s/checkpoint"), "--out", p("m2")}).code,
            cli::kExitInvalid);
}

TEST_F(CliTest, AverageOfOneIsByteIdenticalAndMixedConfigsFail) {
  ASSERT_EQ(train("seq_bn", "a").code, cli::kExitOk);
  const Result r = run({"average", "--adapter", p("a/checkpoint"), "--weights", "1", "--out",
                        p("avg")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (const char* f : {"weights.bin", "adapter_config.json", "head.bin", "head_config.json"}) {
    EXPECT_EQ(slurp(dir / "a" / "checkpoint" / f), slurp(dir / "avg" / f)) << f;
  }
  ASSERT_EQ(train("lora", "b").code, cli::kExitOk);
  const Result bad = run({"average", "--adapter", p("a/checkpoint"), "--adapter",
                          p("b/checkpoint"), "--weights", "0.5,0.5", "--out", p("bad")});
  EXPECT_EQ(bad.code, cli::kExitInvalid);
  EXPECT_NE(bad.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, AverageOutputIsTheWeightedSum) {
  ASSERT_EQ(train("seq_bn", "n", {}, "4").code, cli::kExitOk);
  ASSERT_EQ(train("seq_bn", "o", {}, "5").code, cli::kExitOk);
  ASSERT_EQ(run({"average", "--adapter", p("n/checkpoint"), "--adapter", p("o/checkpoint"),
                 "--weights", "0.3,0.7", "--name", "avg", "--out", p("avg")})
                .code,
            cli::kExitOk);
  const auto n = read_weights(dir / "n" / "checkpoint" / "weights.bin");
  const auto o = read_weights(dir / "o" / "checkpoint" / "weights.bin");
  const auto a = read_weights(dir / "avg" / "weights.bin");
  ASSERT_EQ(a.size(), n.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].second.numel(); ++k) {
      const double want = 0.3 * n[i].second.values()[k] + 0.7 * o[i].second.values()[k];
      EXPECT_NEAR(a[i].second.values()[k], want, 1e-6);
    }
  }
}

TEST_F(CliTest, ComposeRunsBlocksAndReportsValidationErrors) {
  ASSERT_EQ(train("seq_bn", "n", {}, "4").code, cli::kExitOk);
  ASSERT_EQ(train("lora", "o", {}, "5").code, cli::kExitOk);
  // Both checkpoints are named "task"; load them through average to rename.
  ASSERT_EQ(run({"average", "--adapter", p("n/checkpoint"), "--name", "n", "--out", p("nn")}).code,
            cli::kExitOk);
  ASSERT_EQ(run({"average", "--adapter", p("o/checkpoint"), "--name", "o", "--out", p("oo")}).code,
            cli::kExitOk);
  write_input();
  const Result par = run({"compose", "--composition", "Parallel(n, o)", "--adapter", p("nn"),
                          "--adapter", p("oo"), "--input", p("in.json")});
  ASSERT_EQ(par.code, cli::kExitOk) << par.err;
  const json pj = json::parse(par.out);
  ASSERT_EQ(pj.at("branches").size(), 2u);
  EXPECT_EQ(pj.at("branches")[1].at("head"), "o");
  EXPECT_EQ(pj.at("branches")[0].at("logits").at("shape"), json::array({2, 2}));

  const Result stack = run({"compose", "--composition", "Stack(n, o)", "--adapter", p("nn"),
                            "--adapter", p("oo"), "--input", p("in.json")});
  ASSERT_EQ(stack.code, cli::kExitOk) << stack.err;
  EXPECT_EQ(json::parse(stack.out).at("branches")[0].at("head"), "o");

  const Result nest = run({"compose", "--composition", "Split(n, Stack(o))", "--adapter",
                           p("nn"), "--adapter", p("oo"), "--input", p("in.json")});
  EXPECT_EQ(nest.code, cli::kExitInvalid);
  EXPECT_NE(nest.err.find("may not be nested"), std::string::npos) << nest.err;
  const Result syntax = run({"compose", "--composition", "Stack(n", "--adapter", p("nn"),
                             "--input", p("in.json")});
  EXPECT_EQ(syntax.code, cli::kExitInvalid);
  EXPECT_NE(syntax.err.find("column 8"), std::string::npos) << syntax.err;
  const Result missing = run({"compose", "--composition", "Stack(n, q)", "--adapter", p("nn"),
                              "--input", p("in.json")});
  EXPECT_EQ(missing.code, cli::kExitInvalid);
}

}  // namespace
}  // namespace adapters
