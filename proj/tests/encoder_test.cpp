// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "adapters/encoder.hpp"
#include "adapters/errors.hpp"
#include "adapters/ops.hpp"
#include "test_util.hpp"

namespace adapters {
namespace {

using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_tokens;

// Straight-line encoder without any hook plumbing.
Tensor reference_encode(const TransformerEncoder& enc, const TokenBatch& tb) {
  const auto& w = enc.weights();
  const double eps = TransformerEncoder::kLayerNormEps;
  Tensor x = embedding(w.token_embedding, tb.ids, {tb.batch, tb.seq});
  x = add_trailing(x, slice(w.position_embedding, 0, 0, tb.seq));
  Tensor mask({tb.batch, tb.seq}, 1.0);
  for (const auto& l : w.layers) {
    Tensor a = layer_norm(x, l.ln1_gamma, l.ln1_beta, eps);
    Tensor ctx = attention(linear(a, l.wq, l.bq), linear(a, l.wk, l.bk), linear(a, l.wv, l.bv),
                           mask, enc.dims().heads);
    x = add(x, linear(ctx, l.wo, l.bo));
    Tensor f = linear(gelu(linear(layer_norm(x, l.ln2_gamma, l.ln2_beta, eps), l.w1, l.b1)),
                      l.w2, l.b2);
    x = add(x, f);
  }
  return layer_norm(x, w.final_gamma, w.final_beta, eps);
}

class InactiveHooks : public AdapterHooks {
 public:
  bool active_at(HookPoint) const override { return false; }
  SequenceExtension prepend(const Tensor& e, const Tensor& m) override { return {e, m}; }
  Tensor boundary(const Tensor& x, const Tensor&, bool) override { return x; }
  Tensor transform(HookPoint, std::size_t, const Tensor&, const Tensor& h,
                   const Tensor&) override {
    return h;
  }
  KeyValueExtension extend_kv(std::size_t, const Tensor& k, const Tensor& v, const Tensor& m,
                              const Tensor&, const Tensor&) override {
    return {k, v, m};
  }
};

// Prepends a fixed block of rows; also counts hook invocations.
class PrependHooks : public InactiveHooks {
 public:
  explicit PrependHooks(Tensor prompt, std::size_t max_seq) : prompt_(prompt), max_seq_(max_seq) {}
  bool active_at(HookPoint h) const override { return h == HookPoint::kInputPrepend; }
  SequenceExtension prepend(const Tensor& e, const Tensor& m) override {
    const Tensor hs[] = {repeat_leading(prompt_, e.dim(0)), e};
    const Tensor ms[] = {Tensor({e.dim(0), prompt_.dim(0)}, 1.0), m};
    if (prompt_.dim(0) + e.dim(1) > max_seq_) throw CapacityError("too long");
    return {concat(hs, 1), concat(ms, 1)};
  }

 private:
  Tensor prompt_;
  std::size_t max_seq_;
};

TEST(ModelDims, Presets) {
  EXPECT_EQ(ModelDims::parse("desk"), ModelDims::desk());
  const ModelDims rb = ModelDims::parse("roberta-base-dims");
  EXPECT_EQ(rb.num_layers, 12u);
  EXPECT_EQ(rb.hidden, 768u);
  EXPECT_EQ(rb.heads, 12u);
  EXPECT_EQ(rb.intermediate, 3072u);
  const ModelDims custom = ModelDims::parse("L=0,d=32,H=2");
  EXPECT_EQ(custom.num_layers, 0u);
  EXPECT_EQ(custom.hidden, 32u);
  EXPECT_EQ(custom.intermediate, 128u);
  EXPECT_THROW(ModelDims::parse("L=x"), ConfigError);
  EXPECT_THROW(ModelDims::parse("Q=3"), ConfigError);
  EXPECT_THROW((ModelDims{2, 63, 4, 128, 10, 8}.validate()), ConfigError);
}

TEST(Encoder, OutputShape) {
  TransformerEncoder enc(ModelDims::desk(), 1);
  std::mt19937_64 rng(2);
  const auto state = enc.encode(random_tokens(2, 8, 1000, rng));
  EXPECT_EQ(state.hidden.shape(), (Shape{2, 8, 64}));
  EXPECT_EQ(state.mask.shape(), (Shape{2, 8}));
  EXPECT_EQ(state.prompt_length, 0u);
}

TEST(Encoder, MatchesHookFreeReferenceBitExactly) {
  TransformerEncoder enc(ModelDims::desk(), 3);
  std::mt19937_64 rng(4);
  InactiveHooks hooks;
  for (int trial = 0; trial < 5; ++trial) {
    const TokenBatch tb = random_tokens(3, 11, 1000, rng);
    const Tensor ref = reference_encode(enc, tb);
    EXPECT_TRUE(bit_equal(enc.encode(tb).hidden, ref));
    EXPECT_TRUE(bit_equal(enc.encode(tb, &hooks).hidden, ref));
  }
}

TEST(Encoder, DeterministicGivenSeed) {
  TransformerEncoder a(ModelDims::desk(), 9), b(ModelDims::desk(), 9), c(ModelDims::desk(), 10);
  std::mt19937_64 rng(5);
  const TokenBatch tb = random_tokens(2, 6, 1000, rng);
  EXPECT_TRUE(bit_equal(a.encode(tb).hidden, b.encode(tb).hidden));
  EXPECT_GT(max_abs_diff(a.encode(tb).hidden, c.encode(tb).hidden), 1e-3);
}

TEST(Encoder, TokenOutOfRangeIsInputError) {
  TransformerEncoder enc(ModelDims::desk(), 1);
  TokenBatch tb{1, 2, {5, 1000}, {}};
  EXPECT_THROW(enc.encode(tb), InputError);
  tb.ids = {5, -1};
  EXPECT_THROW(enc.encode(tb), InputError);
  tb.ids = {5};
  EXPECT_THROW(enc.encode(tb), InputError);
}

TEST(Encoder, SequenceBeyondCapacity) {
  ModelDims dims = ModelDims::desk();
  dims.max_seq = 8;
  TransformerEncoder enc(dims, 1);
  std::mt19937_64 rng(6);
  EXPECT_THROW(enc.encode(random_tokens(1, 9, 1000, rng)), CapacityError);
  PrependHooks hooks(Tensor({3, 64}, 0.1), 100);
  EXPECT_THROW(enc.encode(random_tokens(1, 6, 1000, rng), &hooks), CapacityError);
}

TEST(Encoder, PrependGrowsSequenceAndPoolingSkipsPrompt) {
  TransformerEncoder enc(ModelDims::desk(), 1);
  std::mt19937_64 rng(7);
  PrependHooks hooks(testing::random_tensor({10, 64}, rng), 128);
  const TokenBatch tb = random_tokens(2, 8, 1000, rng);
  const auto state = enc.encode(tb, &hooks);
  EXPECT_EQ(state.hidden.shape(), (Shape{2, 18, 64}));
  EXPECT_EQ(state.mask.shape(), (Shape{2, 18}));
  EXPECT_EQ(state.prompt_length, 10u);

  Rng hr(1);
  const auto head = PredictionHead::create("h", HeadKind::kClassification, 3, 64, hr);
  const Tensor logits = pooled_logits(state, head);
  EXPECT_EQ(logits.shape(), (Shape{2, 3}));
  const Tensor first = reshape(slice(state.hidden, 1, 10, 1), {2, 64});
  EXPECT_TRUE(bit_equal(logits, linear(first, head.weight, head.bias)));
}

TEST(Encoder, PaddedPositionsDoNotLeakIntoOthers) {
  TransformerEncoder enc(ModelDims::desk(), 1);
  std::mt19937_64 rng(8);
  TokenBatch tb = random_tokens(1, 6, 1000, rng);
  tb.mask = {1, 1, 1, 1, 0, 0};
  const Tensor before = enc.encode(tb).hidden;
  tb.ids[4] = (tb.ids[4] + 17) % 1000;
  tb.ids[5] = (tb.ids[5] + 29) % 1000;
  const Tensor after = enc.encode(tb).hidden;
  EXPECT_TRUE(bit_equal(slice(before, 1, 0, 4), slice(after, 1, 0, 4)));
}

TEST(PredictionHead, ZeroStateZeroLogits) {
  EncoderState state;
  state.hidden = Tensor({3, 5, 8});
  state.mask = Tensor({3, 5}, 1.0);
  Rng rng(1);
  auto head = PredictionHead::create("a", HeadKind::kClassification, 4, 8, rng);
  const Tensor logits = pooled_logits(state, head);
  for (double v : logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(PredictionHead, HeadsAreIndependent) {
  TransformerEncoder enc(ModelDims::desk(), 1);
  std::mt19937_64 rng(9);
  const auto state = enc.encode(random_tokens(2, 5, 1000, rng));
  Rng hr(2);
  auto a = PredictionHead::create("a", HeadKind::kClassification, 2, 64, hr);
  auto b = PredictionHead::create("b", HeadKind::kRegression, 1, 64, hr);
  const Tensor la = pooled_logits(state, a);
  const Tensor lb = pooled_logits(state, b);
  for (auto& v : b.weight.values()) v *= 3.0;
  EXPECT_TRUE(bit_equal(pooled_logits(state, a), la));
  EXPECT_EQ(lb.shape(), (Shape{2, 1}));
}

TEST(PredictionHead, TaggingProjectsEveryToken) {
  TransformerEncoder enc(ModelDims::desk(), 1);
  std::mt19937_64 rng(10);
  const auto state = enc.encode(random_tokens(2, 7, 1000, rng));
  Rng hr(3);
  auto head = PredictionHead::create("t", HeadKind::kTagging, 5, 64, hr);
  EXPECT_EQ(pooled_logits(state, head).shape(), (Shape{2, 7, 5}));
}

TEST(PredictionHead, WidthMismatchAndBadKinds) {
  EncoderState state;
  state.hidden = Tensor({1, 2, 8});
  Rng rng(1);
  auto head = PredictionHead::create("a", HeadKind::kClassification, 2, 16, rng);
  EXPECT_THROW(pooled_logits(state, head), ShapeError);
  EXPECT_THROW(PredictionHead::create("r", HeadKind::kRegression, 2, 8, rng), ConfigError);
  EXPECT_THROW(parse_head_kind("ranking"), ConfigError);
}

}  // namespace
}  // namespace adapters
