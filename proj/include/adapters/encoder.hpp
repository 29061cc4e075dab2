// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "adapters/hooks.hpp"
#include "adapters/model_dims.hpp"
#include "adapters/random.hpp"
#include "adapters/tensor.hpp"

namespace adapters {

/// Token ids for a [batch, seq] block, row-major.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<int> ids;
  std::vector<double> mask;  // 1 = real token, 0 = padding; empty means all ones
};

struct EncoderState {
  Tensor hidden;                 // [R * B, P + S, d]
  Tensor mask;                   // [R * B, P + S]
  std::size_t batch = 0;         // B, rows of the input
  std::size_t branches = 1;      // R, replicas created at the embedding boundary
  std::size_t prompt_length = 0; // P
  std::vector<std::size_t> key_lengths;  // per layer, after prefix extension
};

struct LayerWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;
};

struct EncoderWeights {
  Tensor token_embedding;     // [V, d]
  Tensor position_embedding;  // [max_seq, d]
  std::vector<LayerWeights> layers;
  Tensor final_gamma, final_beta;
};

/// Pre-norm transformer encoder with GELU feed-forward blocks and learned
/// absolute positions. Projection weights are stored [in, out]: y = x W + b.
class TransformerEncoder {
 public:
  static constexpr double kLayerNormEps = 1e-5;

  TransformerEncoder(ModelDims dims, std::uint64_t seed);

  const ModelDims& dims() const noexcept { return dims_; }
  EncoderWeights& weights() noexcept { return weights_; }
  const EncoderWeights& weights() const noexcept { return weights_; }

  /// Runs the encoder. With `hooks == nullptr` (or every hook inactive) no
  /// adapter code runs at all.
  EncoderState encode(const TokenBatch& tokens, AdapterHooks* hooks = nullptr) const;

  /// Θ: every pre-trained tensor with a stable name.
  NamedTensors named_parameters() const;

 private:
  ModelDims dims_;
  EncoderWeights weights_;
};

enum class HeadKind { kClassification, kRegression, kTagging };

std::string_view head_kind_name(HeadKind kind);
HeadKind parse_head_kind(std::string_view text);

/// Named output projection. Classification/regression pool the first token
/// after any prompt positions; tagging projects every non-prompt token.
struct PredictionHead {
  std::string name;
  HeadKind kind = HeadKind::kClassification;
  std::size_t num_labels = 2;
  Tensor weight;  // [d, num_labels]
  Tensor bias;    // [num_labels]

  static PredictionHead create(std::string name, HeadKind kind, std::size_t num_labels,
                               std::size_t hidden, Rng& rng);
};

/// [N, num_labels] for pooled heads, [N, S, num_labels] for tagging heads.
Tensor pooled_logits(const EncoderState& state, const PredictionHead& head);

}  // namespace adapters
