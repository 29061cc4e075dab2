// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Checks shared by the unit tests and the acceptance binary.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adapters/checkpoint.hpp"
#include "adapters/composition.hpp"
#include "adapters/errors.hpp"
#include "adapters/grad_check.hpp"
#include "adapters/model.hpp"
#include "adapters/ops.hpp"
#include "adapters/router.hpp"
#include "adapters/train.hpp"
#include "test_util.hpp"

namespace adapters::testing {

/// The ten single and complex methods, each with a small instantiation used
/// where finite differences over every coordinate must stay cheap.
inline const std::vector<std::pair<std::string, std::string>>& method_instances() {
  static const std::vector<std::pair<std::string, std::string>> kMethods = {
      {"seq_bn", "seq_bn"},
      {"seq_bn_inv", "seq_bn_inv"},
      {"prompt_tuning", "prompt_tuning"},
      {"prefix_tuning", "prefix_tuning[prefix_length=3,bottleneck_size=8]"},
      {"compacter", "compacter"},
      {"lora", "lora"},
      {"ia3", "ia3"},
      {"par_bn", "par_bn[reduction_factor=16]"},
      {"mam", "prefix_tuning[prefix_length=3,bottleneck_size=8]+par_bn[reduction_factor=16]"},
      {"unipelt",
       "gated(lora[r=2,alpha=2]+prefix_tuning[prefix_length=3,bottleneck_size=8]+seq_bn)"},
  };
  return kMethods;
}

/// Max relative error between tape gradients and central differences of a
/// cross-entropy loss through the full encoder, over every adapter and head
/// coordinate. Adapter values are randomized first so no gradient is trivially zero.
/// Gradients below 1e-6 are compared against that floor: at eps 1e-5 their
/// finite differences are dominated by ~1e-11 roundoff.
inline double encoder_grad_error(const std::string& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AdapterModel m(ModelDims::desk(), seed);
  m.add_adapter("a", config);
  m.add_prediction_head("a", HeadKind::kClassification, 2);
  randomize_adapter(m.adapter("a"), rng);
  m.train_adapter(parse_composition("a"));
  TokenBatch tb = random_tokens(2, 5, 50, rng);
  tb.mask = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  const std::vector<int> labels{0, 1};
  NamedTensors params = m.trainable_parameters();
  std::vector<Tensor> xs;
  for (auto& [n, t] : params) xs.push_back(t);
  return grad_check([&] { return cross_entropy(m.forward(tb).logits(0), labels); }, xs, 1e-5, 1e-6);
}

// ------------------------------------------------------------ composition

/// Narrow encoder so randomized composition trials stay fast.
inline ModelDims small_dims() {
  ModelDims d;
  d.num_layers = 2;
  d.hidden = 16;
  d.heads = 2;
  d.intermediate = 32;
  d.vocab = 50;
  d.max_seq = 64;
  return d;
}

/// Methods whose outputs differ per adapter and that keep the sequence length.
inline const std::vector<std::string>& routable_configs() {
  static const std::vector<std::string> kRoutable = {
      "seq_bn",
      "par_bn",
      "double_seq_bn",
      "seq_bn_inv",
      "compacter[phm_dim=2,reduction_factor=4]",
      "lora",
      "ia3",
      "prefix_tuning[prefix_length=3,bottleneck_size=8]",
      "prefix_tuning[prefix_length=5,flat=true]",
      "unipelt",
  };
  return kRoutable;
}

inline void add_random(AdapterModel& m, const std::string& name, const std::string& config,
                       std::mt19937_64& rng) {
  m.add_adapter(name, config);
  randomize_adapter(m.adapter(name), rng);
}

inline Tensor encode_with(AdapterModel& m, const std::optional<CompositionNode>& setup,
                          const TokenBatch& tb) {
  m.set_active(setup);
  return m.forward(tb).state.hidden;
}

/// Parallel(a, b) against two independent forwards; max abs error over trials.
inline double parallel_oracle_error(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& configs = routable_configs();
  std::uniform_int_distribution<std::size_t> pick(0, configs.size() - 1);
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    AdapterModel m(small_dims(), seed * 1000 + t);
    add_random(m, "a", configs[pick(rng)], rng);
    add_random(m, "b", configs[pick(rng)], rng);
    const std::size_t B = 1 + t % 3;
    const TokenBatch tb = random_tokens(B, 3 + t % 5, m.dims().vocab, rng);
    const Tensor par = encode_with(m, parse_composition("Parallel(a, b)"), tb);
    if (par.dim(0) != 2 * B) return INFINITY;
    worst = std::max(worst, max_abs_diff(slice(par, 0, 0, B), encode_with(m, CompositionNode::leaf("a"), tb)));
    worst = std::max(worst, max_abs_diff(slice(par, 0, B, B), encode_with(m, CompositionNode::leaf("b"), tb)));
  }
  return worst;
}

/// BatchSplit(i, j | k, B-k) against forwards of the two sub-batches.
inline double batch_split_oracle_error(int trials, std::uint64_t seed) {
  using N = CompositionNode;
  std::mt19937_64 rng(seed);
  const auto& configs = routable_configs();
  std::uniform_int_distribution<std::size_t> pick(0, configs.size() - 1);
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    AdapterModel m(small_dims(), seed * 1000 + t);
    add_random(m, "i", configs[pick(rng)], rng);
    add_random(m, "j", configs[pick(rng)], rng);
    const std::size_t B = 2 + t % 5;
    const std::size_t k = 1 + t % (B - 1);
    const std::size_t S = 2 + t % 6;
    const TokenBatch tb = random_tokens(B, S, m.dims().vocab, rng);
    const Tensor split = encode_with(m, N::batch_split({N::leaf("i"), N::leaf("j")}, {k, B - k}), tb);
    const TokenBatch head{k, S, {tb.ids.begin(), tb.ids.begin() + k * S}, {}};
    const TokenBatch tail{B - k, S, {tb.ids.begin() + k * S, tb.ids.end()}, {}};
    worst = std::max(worst, max_abs_diff(slice(split, 0, 0, k), encode_with(m, N::leaf("i"), head)));
    worst = std::max(worst, max_abs_diff(slice(split, 0, k, B - k), encode_with(m, N::leaf("j"), tail)));
  }
  return worst;
}

/// Block-level oracles drive the router directly at one hook.
struct HookCase {
  HookPoint hook;
  const char* config;
  bool wide;  // h has the FFN width instead of d
};

inline const std::vector<HookCase>& hook_cases() {
  static const std::vector<HookCase> kCases = {
      {HookPoint::kPostFfnResidual, "seq_bn", false},
      {HookPoint::kPostAttnResidual, "double_seq_bn", false},
      {HookPoint::kParallelToLayer, "par_bn", false},
      {HookPoint::kAttnQProj, "lora[targets=qv]", false},
      {HookPoint::kAttnValuesScale, "ia3", false},
      {HookPoint::kFfnIntermediateScale, "ia3", true},
      {HookPoint::kPostFfnResidual, "gated(lora+seq_bn)", false},
  };
  return kCases;
}

/// True when the hook passes the block input as `src` rather than `h` itself.
inline bool separate_source(HookPoint hook) {
  return hook == HookPoint::kParallelToLayer || hook == HookPoint::kAttnQProj;
}

/// Average(n, o, q | w) against sum_c w_c / sum(w) * adapter_c(h).
inline double average_oracle_error(int trials, std::uint64_t seed) {
  using N = CompositionNode;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uw(0.0, 2.0);
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    const HookCase& hc = hook_cases()[t % hook_cases().size()];
    AdapterModel m(small_dims(), seed * 1000 + t);
    add_random(m, "n", hc.config, rng);
    add_random(m, "o", hc.config, rng);
    add_random(m, "q", hc.config, rng);
    const std::vector<double> w = {uw(rng), uw(rng), t % 4 == 0 ? 0.0 : uw(rng)};
    const N node = N::average({N::leaf("n"), N::leaf("o"), N::leaf("q")}, w);
    validate_composition(node, m.registry());
    const std::size_t B = 1 + t % 3, S = 2 + t % 4, d = m.dims().hidden;
    const std::size_t width = hc.wide ? m.dims().intermediate : d;
    const Tensor h = random_tensor({B, S, width}, rng);
    const Tensor src = separate_source(hc.hook) ? random_tensor({B, S, d}, rng) : h;
    const Tensor mask({B, S}, 1.0);
    const std::size_t layer = t % 2;
    Router router(m.registry(), node, B);
    const Tensor got = router.transform(hc.hook, layer, src, h, mask);

    const double total = w[0] + w[1] + w[2];
    Tensor expect(h.shape(), 0.0);
    const char* names[] = {"n", "o", "q"};
    for (int c = 0; c < 3; ++c) {
      const Tensor out = m.adapter(names[c]).transform(hc.hook, layer, src, h, mask);
      for (std::size_t i = 0; i < expect.numel(); ++i) {
        expect.values()[i] += w[c] / total * out.values()[i];
      }
    }
    worst = std::max(worst, max_abs_diff(got, expect));
  }
  return worst;
}

/// Split(g, h | s1, s2): every position is handled by exactly one child (or,
/// past s1 + s2, passed through bit-exactly with one warning).
inline double split_oracle_error(int trials, std::uint64_t seed) {
  using N = CompositionNode;
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    const HookCase& hc = hook_cases()[t % hook_cases().size()];
    AdapterModel m(small_dims(), seed * 1000 + t);
    add_random(m, "g", hc.config, rng);
    add_random(m, "h", hc.config, rng);
    const std::size_t B = 1 + t % 3, S = 3 + t % 7, d = m.dims().hidden;
    const std::size_t s1 = 1 + t % (S - 1);
    const std::size_t s2 = 1 + (t / 3) % (S - s1);  // may leave a remainder
    const std::size_t width = hc.wide ? m.dims().intermediate : d;
    const Tensor h = random_tensor({B, S, width}, rng);
    const Tensor src = separate_source(hc.hook) ? random_tensor({B, S, d}, rng) : h;
    const Tensor mask({B, S}, 1.0);
    const N node = N::split({N::leaf("g"), N::leaf("h")}, {s1, s2});
    validate_composition(node, m.registry(), InputShape{B, S});
    Router router(m.registry(), node, B);
    const Tensor got = router.transform(hc.hook, 1, src, h, mask);
    if (got.shape() != h.shape()) return INFINITY;
    auto part = [&](const char* name, std::size_t start, std::size_t n) {
      return m.adapter(name).transform(hc.hook, 1, slice(src, 1, start, n), slice(h, 1, start, n),
                                       slice(mask, 1, start, n));
    };
    worst = std::max(worst, max_abs_diff(slice(got, 1, 0, s1), part("g", 0, s1)));
    worst = std::max(worst, max_abs_diff(slice(got, 1, s1, s2), part("h", s1, s2)));
    const std::size_t rest = S - s1 - s2;
    if (rest > 0) {
      if (!bit_equal(slice(got, 1, s1 + s2, rest), slice(h, 1, s1 + s2, rest)) ||
          router.warnings().size() != 1) {
        return INFINITY;
      }
    } else if (!router.warnings().empty()) {
      return INFINITY;
    }
  }
  return worst;
}


// ------------------------------------------------------------- validation

/// One node of `kind` over a single child, with arithmetic that validates.
inline CompositionNode single_child(BlockKind kind, CompositionNode child) {
  using N = CompositionNode;
  switch (kind) {
    case BlockKind::kLeaf: return N::leaf("a");
    case BlockKind::kStack: return N::stack({std::move(child)});
    case BlockKind::kFuse: return N::fuse({std::move(child)});
    case BlockKind::kSplit: return N::split({std::move(child)}, {1});
    case BlockKind::kBatchSplit: return N::batch_split({std::move(child)}, {1});
    case BlockKind::kParallel: return N::parallel({std::move(child)});
    case BlockKind::kAverage: return N::average({std::move(child)}, {1.0});
  }
  return N::leaf("a");
}

/// Registry with the adapters and fusions the validation suites refer to.
inline AdapterModel validation_model() {
  AdapterModel model(small_dims(), 3);
  for (const char* n : {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "n", "o", "p", "q", "r"}) {
    model.add_adapter(n, "seq_bn");
  }
  model.add_adapter_fusion({"a"});
  model.add_adapter_fusion({"d", "e", "f"});
  return model;
}

struct SuiteResult {
  int checked = 0;
  std::vector<std::string> failures;
};

/// Every (parent block, child kind) pair against the rule table, both through
/// nesting_allowed and through validate_composition on a concrete tree.
inline SuiteResult nesting_suite(const AdapterRegistry& reg) {
  using K = BlockKind;
  // Columns in kAllBlockKinds order: Leaf, Stack, Fuse, Split, BatchSplit, Parallel, Average.
  const std::map<K, std::vector<bool>> table = {
      {K::kStack, {true, true, false, false, true, true, true}},
      {K::kFuse, {true, false, false, false, false, false, false}},
      {K::kSplit, {true, false, false, false, false, false, false}},
      {K::kBatchSplit, {true, true, false, false, true, true, true}},
      {K::kParallel, {true, true, false, false, true, true, true}},
      {K::kAverage, {true, true, false, false, true, true, true}},
  };
  SuiteResult r;
  for (const auto& [parent, allowed] : table) {
    for (std::size_t c = 0; c < std::size(kAllBlockKinds); ++c) {
      const K child = kAllBlockKinds[c];
      const CompositionNode node = single_child(parent, single_child(child, CompositionNode::leaf("a")));
      bool accepted = true;
      try {
        validate_composition(node, reg, InputShape{1, 8});
      } catch (const CompositionError&) {
        accepted = false;
      }
      if (nesting_allowed(parent, child) != allowed[c] || accepted != allowed[c]) {
        r.failures.push_back(std::string(block_name(parent)) + "/" + std::string(block_name(child)));
      }
      ++r.checked;
    }
  }
  for (K k : kAllBlockKinds) {
    if (nesting_allowed(K::kLeaf, k)) r.failures.push_back("Leaf/" + std::string(block_name(k)));
  }
  return r;
}

/// The three arithmetic examples validate; each mismatched variant is an ArithmeticError.
inline SuiteResult arithmetic_suite(const AdapterRegistry& reg) {
  SuiteResult r;
  auto accepts = [&](const char* text, std::optional<InputShape> shape) {
    ++r.checked;
    try {
      validate_composition(parse_composition(text), reg, shape);
    } catch (const Error& e) {
      r.failures.push_back(std::string(text) + " rejected: " + e.what());
    }
  };
  auto rejects = [&](const char* text, std::optional<InputShape> shape) {
    ++r.checked;
    try {
      validate_composition(parse_composition(text), reg, shape);
      r.failures.push_back(std::string(text) + " accepted");
    } catch (const ArithmeticError&) {
    } catch (const Error& e) {
      r.failures.push_back(std::string(text) + " wrong error: " + e.what());
    }
  };
  accepts("Split(g, h | 64, 64)", InputShape{2, 128});
  rejects("Split(g, h | 64, 65)", InputShape{2, 128});
  rejects("Split(g, h | 64)", std::nullopt);
  rejects("Split(g, h | 64, 0)", std::nullopt);
  accepts("BatchSplit(i, j | 2, 4)", InputShape{6, 8});
  rejects("BatchSplit(i, j | 2, 4)", InputShape{5, 8});
  rejects("BatchSplit(i, j | 2, 4, 1)", std::nullopt);
  accepts("Average(n, o | 0.3, 0.7)", std::nullopt);
  rejects("Average(n, o | 0.3)", std::nullopt);
  rejects("Average(n, o | -0.3, 1.3)", std::nullopt);
  rejects("Average(n, o | 0, 0)", std::nullopt);
  return r;
}

// ------------------------------------------------------------- properties

/// Methods whose fresh initialisation is the identity function.
inline const std::vector<std::string>& identity_at_init_configs() {
  static const std::vector<std::string> kConfigs = {
      "seq_bn", "double_seq_bn",     "par_bn",    "seq_bn_inv", "double_seq_bn_inv",
      "par_bn_inv", "compacter", "lora",          "ia3"};
  return kConfigs;
}

/// Max |adapted - base| over `inputs` random batches for a freshly added adapter.
inline double identity_at_init_error(const std::string& config, int inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AdapterModel m(ModelDims::desk(), seed);
  m.add_adapter("fresh", config);
  double worst = 0;
  for (int t = 0; t < inputs; ++t) {
    TokenBatch tb = random_tokens(1 + t % 3, 2 + t % 11, m.dims().vocab, rng);
    if (t % 2 == 1) {  // padded tail on the last sample
      tb.mask.assign(tb.batch * tb.seq, 1.0);
      tb.mask.back() = 0;
    }
    const Tensor base = encode_with(m, std::nullopt, tb);
    worst = std::max(worst, max_abs_diff(encode_with(m, CompositionNode::leaf("fresh"), tb), base));
  }
  m.set_active(std::nullopt);
  return worst;
}

/// Max |inverse(forward(x)) - x| and |forward(inverse(x)) - x| for every
/// invertible module of a randomized `config` adapter.
inline double inversion_error(const std::string& config, int inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rng arng(seed);
  const ModelDims dims = ModelDims::desk();
  Adapter a("inv", parse_config(config), dims, arng);
  randomize_adapter(a, rng, 0.5);
  double worst = 0;
  int modules = 0;
  for (const auto& member : a.members()) {
    if (!member.invertible) continue;
    ++modules;
    for (int t = 0; t < inputs; ++t) {
      const Tensor x = random_tensor({1 + std::size_t(t % 3), 1 + std::size_t(t % 9), dims.hidden}, rng, -3, 3);
      const Tensor fwd = invertible_apply(x, *member.invertible, Direction::kForward);
      const Tensor inv = invertible_apply(x, *member.invertible, Direction::kInverse);
      worst = std::max(worst, max_abs_diff(invertible_apply(fwd, *member.invertible, Direction::kInverse), x));
      worst = std::max(worst, max_abs_diff(invertible_apply(inv, *member.invertible, Direction::kForward), x));
    }
  }
  return modules > 0 ? worst : INFINITY;
}

/// Outcome of ten optimizer steps on one adapter.
struct FreezeReport {
  bool theta_unchanged = false;
  std::vector<std::string> unchanged_phi;
};

inline FreezeReport freeze_check(const std::string& config, const TaskData& data) {
  AdapterModel m(ModelDims::desk(), 11);
  m.add_adapter("t", config);
  m.add_prediction_head("t", head_kind_for(data.spec.kind), 2);
  m.train_adapter(parse_composition("t"));
  const std::uint64_t theta = checksum(m.base_parameters());
  const NamedTensors phi = m.trainable_parameters();
  std::vector<std::vector<double>> before;
  for (const auto& [n, t] : phi) before.emplace_back(t.values().begin(), t.values().end());
  TrainOptions o;
  o.epochs = 10;
  o.max_steps = 10;
  train(m, data, "t", o);
  FreezeReport r;
  r.theta_unchanged = checksum(m.base_parameters()) == theta;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const auto v = phi[i].second.values();
    if (std::equal(v.begin(), v.end(), before[i].begin())) r.unchanged_phi.push_back(phi[i].first);
  }
  return r;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// save -> load into a fresh model -> save; true when both checkpoints are
/// byte-identical.
inline bool round_trips_byte_identically(const std::string& config, const std::filesystem::path& dir,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AdapterModel a(ModelDims::desk(), 1);
  a.add_adapter("x", config);
  a.add_prediction_head("x", HeadKind::kClassification, 2);
  randomize_adapter(a.adapter("x"), rng);
  save_adapter(a, "x", dir / "first");
  AdapterModel b(ModelDims::desk(), 2);
  load_adapter(b, dir / "first");
  save_adapter(b, "x", dir / "second");
  for (const char* f : {"weights.bin", "adapter_config.json"}) {
    if (read_file(dir / "first" / f) != read_file(dir / "second" / f)) return false;
  }
  return true;
}

/// Loading a desk checkpoint into a wider model throws ShapeError and leaves
/// the registry untouched.
inline bool cross_dim_load_fails_cleanly(const std::string& config, const std::filesystem::path& dir) {
  AdapterModel a(ModelDims::desk(), 1);
  a.add_adapter("x", config);
  save_adapter(a, "x", dir / "desk");
  ModelDims wide = ModelDims::desk();
  wide.hidden = 128;
  AdapterModel b(wide, 1);
  try {
    load_adapter(b, dir / "desk");
  } catch (const ShapeError&) {
    return !b.registry().contains("x");
  }
  return false;
}

}  // namespace adapters::testing
