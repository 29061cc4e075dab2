// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adapters/errors.hpp"
#include "adapters/grad_check.hpp"
#include "adapters/ops.hpp"
#include "adapters/tensor.hpp"

namespace adapters {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void expect_values(const Tensor& t, std::initializer_list<double> expected, double tol = 0.0) {
  ASSERT_EQ(t.numel(), expected.size());
  std::size_t i = 0;
  for (double e : expected) EXPECT_NEAR(t.values()[i++], e, tol) << "at " << i - 1;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye = Tensor::rows({{1, 0}, {0, 1}});
  Tensor m = Tensor::rows({{1, 2}, {3, 4}});
  expect_values(matmul(eye, m), {1, 2, 3, 4});
}

TEST(Matmul, TwoByTwoProduct) {
  Tensor a = Tensor::rows({{1, 2}, {3, 4}});
  Tensor b = Tensor::rows({{5, 6}, {7, 8}});
  expect_values(matmul(a, b), {19, 22, 43, 50});
}

TEST(Matmul, ZeroMatrixAnnihilates) {
  std::mt19937_64 rng(1);
  Tensor z(Shape{3, 4});
  Tensor out = matmul(z, random_tensor({4, 5}, rng));
  EXPECT_EQ(out.shape(), (Shape{3, 5}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 5}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[4, 5]"), std::string::npos);
  }
}

TEST(Kron, OneByOneLeftFactorIsIdentity) {
  Tensor b = Tensor::rows({{1, 2, 3}, {4, 5, 6}});
  Tensor out = kron(Tensor::rows({{1}}), b);
  EXPECT_EQ(out.shape(), b.shape());
  expect_values(out, {1, 2, 3, 4, 5, 6});
}

TEST(Kron, IdentityExpandsToBlockDiagonal) {
  Tensor b = Tensor::rows({{1, 2}, {3, 4}});
  Tensor out = kron(Tensor::rows({{1, 0}, {0, 1}}), b);
  expect_values(out, {1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 1, 2, 0, 0, 3, 4});
}

TEST(Kron, ScalarScaling) {
  expect_values(kron(Tensor::rows({{2}}), Tensor::rows({{1, 1}, {1, 1}})), {2, 2, 2, 2});
}

TEST(Kron, RejectsNonMatrices) {
  EXPECT_THROW(kron(Tensor(Shape{2}), Tensor(Shape{2, 2})), ShapeError);
}

// (A (x) B) x computed blockwise: block i of the result is sum_j A(i,j) * (B x_j).
TEST(Kron, MatvecMatchesBlockwiseOracle) {
  std::mt19937_64 rng(7);
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::size_t p = 1; p <= 4; ++p)
      for (std::size_t q = 1; q <= 4; ++q) {
        Tensor a = random_tensor({n, n}, rng);
        Tensor b = random_tensor({p, q}, rng);
        Tensor x = random_tensor({n * q, 1}, rng);
        Tensor y = matmul(kron(a, b), x);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t r = 0; r < p; ++r) {
            double expected = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              double bx = 0.0;
              for (std::size_t s = 0; s < q; ++s) bx += b(r, s) * x(j * q + s, 0);
              expected += a(i, j) * bx;
            }
            EXPECT_NEAR(y(i * p + r, 0), expected, 1e-12);
          }
      }
}

TEST(Softmax, UniformInput) {
  expect_values(softmax(Tensor::of({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
}

TEST(Softmax, StableUnderLargeEqualLogits) {
  expect_values(softmax(Tensor::of({1000, 1000}), 0), {0.5, 0.5}, 0.0);
}

TEST(Softmax, TwoClassClosedForm) {
  expect_values(softmax(Tensor::of({0, std::log(3.0)}), 0), {0.25, 0.75}, 1e-15);
}

TEST(Softmax, RowsSumToOneAlongAnyAxis) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({3, 4, 5}, rng, -20, 20);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor y = softmax(x, axis);
    const auto& s = y.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= s[i];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < s[axis]; ++j) {
          const double v = y.values()[(o * s[axis] + j) * inner + i];
          EXPECT_GE(v, 0.0);
          total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
  }
}

TEST(LayerNorm, ConstantRowCollapsesToBeta) {
  Tensor x = Tensor::rows({{3, 3, 3}});
  Tensor out = layer_norm(x, Tensor::of({1, 1, 1}), Tensor::of({0, 0, 0}), 1e-5);
  expect_values(out, {0, 0, 0});
}

TEST(LayerNorm, AlreadyNormalizedRow) {
  Tensor out = layer_norm(Tensor::rows({{1, -1}}), Tensor::of({1, 1}), Tensor::of({0, 0}), 0.0);
  expect_values(out, {1, -1}, 1e-15);
}

TEST(LayerNorm, ZeroGammaBroadcastsBeta) {
  std::mt19937_64 rng(5);
  Tensor out =
      layer_norm(random_tensor({4, 3}, rng), Tensor::of({0, 0, 0}), Tensor::of({1, 2, 3}), 1e-5);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(out(r, 0), 1.0);
    EXPECT_EQ(out(r, 1), 2.0);
    EXPECT_EQ(out(r, 2), 3.0);
  }
}

TEST(LayerNorm, RowsHaveZeroMeanBeforeAffine) {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({16, 64}, rng, -50, 50);
  Tensor out = layer_norm(x, Tensor(Shape{64}, 1.0), Tensor(Shape{64}, 0.0), 1e-5);
  for (std::size_t r = 0; r < 16; ++r) {
    double m = 0.0;
    for (std::size_t j = 0; j < 64; ++j) m += out(r, j);
    EXPECT_LE(std::abs(m / 64.0), 1e-10);
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::of({1, 2, 3});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(x));
  }
  expect_values(Tensor(x.shape(), std::vector<double>(x.grad().begin(), x.grad().end())),
                {1, 1, 1});
}

TEST(Backward, SquareGivesTwiceX) {
  Tensor x = Tensor::of({3});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, FrozenTensorReceivesNoGradient) {
  Tensor w = Tensor::rows({{1, 2}, {3, 4}});
  Tensor x = Tensor::rows({{1, 1}});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(matmul(x, w)));
  EXPECT_FALSE(w.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::of({1, 2});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, NothingRecordedWithoutTape) {
  Tensor x = Tensor::of({1, 2});
  x.set_requires_grad(true);
  Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  Tensor x = Tensor::of({2});
  x.set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(scale(x, 3.0)));
  }
  EXPECT_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(GradCheck, QuadraticAtTightEps) {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({8}, rng);
  x.set_requires_grad(true);
  const double err = grad_check([&] { return sum(mul(x, x)); }, x, 1e-5);
  EXPECT_LE(err, 1e-6);
}

TEST(GradCheck, LinearIsAtRoundingScale) {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor({6}, rng);
  Tensor w = random_tensor({6}, rng);
  x.set_requires_grad(true);
  const double err = grad_check([&] { return sum(mul(x, w)); }, x, 1e-4);
  EXPECT_LE(err, 1e-9);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A tape rule that is deliberately wrong must be caught by the oracle.
  Tensor x = Tensor::of({0.5, -0.25});
  x.set_requires_grad(true);
  auto bad = [&] {
    Tensor out = Tensor::scalar(x(0) * x(0) + x(1) * x(1));
    if (current_tape()) {
      out.set_requires_grad(true);
      current_tape()->record({x}, out, [](const Tensor& o, std::span<Tensor> in) {
        auto d = in[0].grad_buffer();
        d[0] += o.grad()[0];
        d[1] += o.grad()[0];
      });
    }
    return out;
  };
  EXPECT_GT(grad_check(bad, x, 1e-4), 0.1);
}

// Every differentiable op passes the finite-difference oracle at eps = 1e-4.
class OpGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{2024};
  Tensor weights_for(const Tensor& t) { return random_tensor(t.shape(), rng); }
  Tensor param(Shape s) { return random_tensor(std::move(s), rng).set_requires_grad(true); }

  // sum(op(...) * R) with a fixed random R so no coordinate's gradient is trivially uniform.
  void check(const std::function<Tensor()>& op, std::vector<Tensor> xs) {
    Tensor r;
    {
      NoGradScope ng;
      r = weights_for(op());
    }
    const double err = grad_check([&] { return sum(mul(op(), r)); }, xs, 1e-4);
    EXPECT_LE(err, 1e-4);
  }
};

TEST_F(OpGradients, Matmul) {
  Tensor a = param({3, 4}), b = param({4, 2});
  check([&] { return matmul(a, b); }, {a, b});
}

TEST_F(OpGradients, LinearWithBias) {
  Tensor x = param({2, 3, 4}), w = param({4, 5}), b = param({5});
  check([&] { return linear(x, w, b); }, {x, w, b});
}

TEST_F(OpGradients, Transpose) {
  Tensor a = param({3, 2});
  check([&] { return transpose(a); }, {a});
}

TEST_F(OpGradients, Kron) {
  Tensor a = param({2, 2}), b = param({3, 2});
  check([&] { return kron(a, b); }, {a, b});
}

TEST_F(OpGradients, ElementwiseBinary) {
  Tensor a = param({2, 3}), b = param({2, 3});
  check([&] { return add(a, b); }, {a, b});
  check([&] { return sub(a, b); }, {a, b});
  check([&] { return mul(a, b); }, {a, b});
  check([&] { return scale(a, -1.5); }, {a});
}

TEST_F(OpGradients, Broadcasts) {
  Tensor x = param({2, 3, 4}), y = param({3, 4}), v = param({4}), g = param({2});
  check([&] { return add_trailing(x, y); }, {x, y});
  check([&] { return mul_trailing(x, v); }, {x, v});
  check([&] { return mul_leading(x, g); }, {x, g});
}

TEST_F(OpGradients, Activations) {
  Tensor x = param({3, 5});
  check([&] { return gelu(x); }, {x});
  check([&] { return tanh(x); }, {x});
  check([&] { return sigmoid(x); }, {x});
  check([&] { return relu(x); }, {x});
}

TEST_F(OpGradients, SoftmaxEachAxis) {
  Tensor x = param({2, 3, 4});
  for (std::size_t axis = 0; axis < 3; ++axis) check([&] { return softmax(x, axis); }, {x});
}

TEST_F(OpGradients, LayerNorm) {
  Tensor x = param({3, 6}), g = param({6}), b = param({6});
  check([&] { return layer_norm(x, g, b, 1e-5); }, {x, g, b});
}

TEST_F(OpGradients, ShapeOps) {
  Tensor a = param({2, 3, 2}), b = param({2, 1, 2});
  Tensor parts[] = {a, b};
  check([&] { return concat(parts, 1); }, {a, b});
  check([&] { return slice(a, 1, 1, 2); }, {a});
  check([&] { return reshape(a, {3, 4}); }, {a});
  const std::size_t idx[] = {2, 0, 2};
  check([&] { return index_select(a, 1, idx); }, {a});
  check([&] { return repeat_leading(b, 3); }, {b});
}

TEST_F(OpGradients, Stitch) {
  Tensor a = param({2, 4}), b = param({1, 4});
  Tensor pieces[] = {a, b};
  std::vector<std::size_t> pos[] = {{2, 0}, {1}};
  check([&] { return stitch(pieces, pos, 0, 3); }, {a, b});
}

TEST_F(OpGradients, EmbeddingAndMaskedMean) {
  Tensor table = param({5, 3});
  const int ids[] = {4, 0, 4, 2};
  check([&] { return embedding(table, ids, {2, 2}); }, {table});
  Tensor x = param({2, 3, 4});
  Tensor mask = Tensor::rows({{1, 0, 1}, {1, 1, 1}});
  check([&] { return masked_mean(x, mask); }, {x});
}

TEST_F(OpGradients, AttentionWithMask) {
  Tensor q = param({2, 3, 4}), k = param({2, 5, 4}), v = param({2, 5, 4});
  Tensor mask = Tensor::rows({{1, 1, 0, 1, 1}, {0, 1, 1, 1, 1}});
  check([&] { return attention(q, k, v, mask, 2); }, {q, k, v});
}

TEST_F(OpGradients, Losses) {
  Tensor logits = param({4, 3});
  const int labels[] = {0, 2, -1, 1};
  EXPECT_LE(grad_check([&] { return cross_entropy(logits, labels); }, logits, 1e-4), 1e-4);
  Tensor pred = param({5}), target = random_tensor({5}, rng);
  EXPECT_LE(grad_check([&] { return mse(pred, target); }, pred, 1e-4), 1e-4);
}

TEST(Attention, MaskedKeysGetZeroWeight) {
  // With values one-hot per key, the output equals the attention weights.
  Tensor q = Tensor(Shape{1, 1, 3}, {0.3, -0.2, 0.9});
  Tensor k = Tensor(Shape{1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor v = k.clone();
  Tensor mask = Tensor::rows({{1, 0, 1}});
  Tensor out = attention(q, k, v, mask, 1);
  EXPECT_EQ(out(0, 0, 1), 0.0);
  EXPECT_NEAR(out(0, 0, 0) + out(0, 0, 2), 1.0, 1e-15);
}

}  // namespace
}  // namespace adapters
