// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adapters/tensor.hpp"

namespace adapters {

// Differentiable tensor operations. Each op records itself on the current tape
// when any input requires a gradient; the result then requires a gradient too.

/// a[..., k] x b[k, n] -> [..., n]. Leading axes of `a` are treated as rows.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., k] * w[k, n] + bias[n]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor transpose(const Tensor& a);

/// Kronecker product of two matrices: out(i*p + r, j*q + s) = a(i, j) * b(r, s).
Tensor kron(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// x + y where y's shape is a suffix of x's shape (bias and position broadcasts).
Tensor add_trailing(const Tensor& x, const Tensor& y);
/// x * y where y's shape is a suffix of x's shape.
Tensor mul_trailing(const Tensor& x, const Tensor& y);
/// x * g where g's shape is a prefix of x's shape (per-sample or per-token gates).
Tensor mul_leading(const Tensor& x, const Tensor& g);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

enum class Activation { kIdentity, kRelu, kGelu, kTanh, kSigmoid };
Tensor activate(const Tensor& x, Activation f);

Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma * x_hat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Copies values into a new shape with the same element count.
Tensor reshape(const Tensor& x, Shape shape);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

/// Selects entries along `axis` in the given order.
Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices);

/// Inverse of partitioning with index_select: piece k is written to positions[k]
/// along `axis`. Positions must cover [0, extent) exactly once.
Tensor stitch(std::span<const Tensor> pieces, std::span<const std::vector<std::size_t>> positions,
              std::size_t axis, std::size_t extent);

/// Gathers rows of table[V, d] -> [lead..., d].
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& lead);

/// Broadcasts x to a new leading axis of extent n.
Tensor repeat_leading(const Tensor& x, std::size_t n);

/// x[N, S, c], mask[N, S] (0/1, not differentiated) -> [N, c] mean over unmasked positions.
Tensor masked_mean(const Tensor& x, const Tensor& mask);

/// Multi-head scaled dot-product attention with heads packed along the last axis.
/// q[N, Sq, d], k/v[N, Sk, d], key_mask[N, Sk] (1 = attend) -> [N, Sq, d].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& key_mask,
                 std::size_t heads);

/// Mean cross-entropy of logits[N, C] against integer labels. Labels < 0 are ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean squared error.
Tensor mse(const Tensor& prediction, const Tensor& target);

}  // namespace adapters
