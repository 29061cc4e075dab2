// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/encoder.hpp"

#include <cmath>
#include <numeric>

#include "adapters/errors.hpp"
#include "adapters/ops.hpp"

namespace adapters {

namespace {

Tensor projection(std::size_t in, std::size_t out, Rng& rng) {
  return normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

}  // namespace

std::string_view hook_name(HookPoint hook) {
  switch (hook) {
    case HookPoint::kEmbeddingBoundary: return "EmbeddingBoundary";
    case HookPoint::kInputPrepend: return "InputPrepend";
    case HookPoint::kAttnKV: return "AttnKV";
    case HookPoint::kAttnQProj: return "AttnQProj";
    case HookPoint::kAttnVProj: return "AttnVProj";
    case HookPoint::kAttnKeysScale: return "AttnKeysScale";
    case HookPoint::kAttnValuesScale: return "AttnValuesScale";
    case HookPoint::kFfnIntermediateScale: return "FfnIntermediateScale";
    case HookPoint::kPostAttnResidual: return "PostAttnResidual";
    case HookPoint::kPostFfnResidual: return "PostFfnResidual";
    case HookPoint::kParallelToLayer: return "ParallelToLayer";
  }
  return "?";
}

TransformerEncoder::TransformerEncoder(ModelDims dims, std::uint64_t seed) : dims_(dims) {
  dims_.validate();
  Rng rng = derived_rng(seed, "encoder");
  const std::size_t d = dims_.hidden;
  const std::size_t ff = dims_.intermediate;
  weights_.token_embedding = normal_tensor({dims_.vocab, d}, 1.0, rng);
  weights_.position_embedding = normal_tensor({dims_.max_seq, d}, 0.2, rng);
  for (std::size_t l = 0; l < dims_.num_layers; ++l) {
    LayerWeights w;
    w.ln1_gamma = Tensor({d}, 1.0);
    w.ln1_beta = Tensor({d});
    w.wq = projection(d, d, rng);
    w.bq = Tensor({d});
    w.wk = projection(d, d, rng);
    w.bk = Tensor({d});
    w.wv = projection(d, d, rng);
    w.bv = Tensor({d});
    w.wo = projection(d, d, rng);
    w.bo = Tensor({d});
    w.ln2_gamma = Tensor({d}, 1.0);
    w.ln2_beta = Tensor({d});
    w.w1 = projection(d, ff, rng);
    w.b1 = Tensor({ff});
    w.w2 = projection(ff, d, rng);
    w.b2 = Tensor({d});
    weights_.layers.push_back(std::move(w));
  }
  weights_.final_gamma = Tensor({d}, 1.0);
  weights_.final_beta = Tensor({d});
}

EncoderState TransformerEncoder::encode(const TokenBatch& tokens, AdapterHooks* hooks) const {
  const std::size_t B = tokens.batch;
  const std::size_t S = tokens.seq;
  if (B == 0 || S == 0) throw InputError("encode: empty token batch");
  if (tokens.ids.size() != B * S) {
    throw InputError("encode: expected " + std::to_string(B * S) + " token ids, got " +
                     std::to_string(tokens.ids.size()));
  }
  if (!tokens.mask.empty() && tokens.mask.size() != B * S) {
    throw InputError("encode: mask size does not match token ids");
  }
  if (S > dims_.max_seq) {
    throw CapacityError("encode: sequence length " + std::to_string(S) + " exceeds max_seq " +
                        std::to_string(dims_.max_seq));
  }
  auto active = [&](HookPoint h) { return hooks != nullptr && hooks->active_at(h); };

  Tensor x = embedding(weights_.token_embedding, tokens.ids, {B, S});
  Tensor mask = tokens.mask.empty() ? Tensor({B, S}, 1.0) : Tensor({B, S}, tokens.mask);

  const std::size_t R = hooks != nullptr ? hooks->branch_count() : 1;
  if (R > 1) {
    std::vector<std::size_t> rows(R * B);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i % B;
    x = index_select(x, 0, rows);
    mask = index_select(mask, 0, rows);
  }

  if (active(HookPoint::kInputPrepend)) {
    SequenceExtension ext = hooks->prepend(x, mask);
    x = std::move(ext.hidden);
    mask = std::move(ext.mask);
  }
  const std::size_t total = x.dim(1);
  if (total > dims_.max_seq) {
    throw CapacityError("encode: prompt-extended length " + std::to_string(total) +
                        " exceeds max_seq " + std::to_string(dims_.max_seq));
  }
  x = add_trailing(x, slice(weights_.position_embedding, 0, 0, total));

  if (active(HookPoint::kEmbeddingBoundary)) x = hooks->boundary(x, mask, false);

  EncoderState state;
  state.batch = B;
  state.branches = R;
  state.prompt_length = total - S;

  for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
    const LayerWeights& w = weights_.layers[l];
    const Tensor a = layer_norm(x, w.ln1_gamma, w.ln1_beta, kLayerNormEps);
    Tensor q = linear(a, w.wq, w.bq);
    if (active(HookPoint::kAttnQProj)) q = hooks->transform(HookPoint::kAttnQProj, l, a, q, mask);
    Tensor k = linear(a, w.wk, w.bk);
    if (active(HookPoint::kAttnKeysScale)) {
      k = hooks->transform(HookPoint::kAttnKeysScale, l, k, k, mask);
    }
    Tensor v = linear(a, w.wv, w.bv);
    if (active(HookPoint::kAttnVProj)) v = hooks->transform(HookPoint::kAttnVProj, l, a, v, mask);
    if (active(HookPoint::kAttnValuesScale)) {
      v = hooks->transform(HookPoint::kAttnValuesScale, l, v, v, mask);
    }
    Tensor key_mask = mask;
    if (active(HookPoint::kAttnKV)) {
      KeyValueExtension ext = hooks->extend_kv(l, k, v, key_mask, a, mask);
      k = std::move(ext.keys);
      v = std::move(ext.values);
      key_mask = std::move(ext.key_mask);
    }
    state.key_lengths.push_back(k.dim(1));

    Tensor o = linear(attention(q, k, v, key_mask, dims_.heads), w.wo, w.bo);
    if (active(HookPoint::kPostAttnResidual)) {
      o = hooks->transform(HookPoint::kPostAttnResidual, l, o, o, mask);
    }
    x = add(x, o);

    Tensor inter = gelu(linear(layer_norm(x, w.ln2_gamma, w.ln2_beta, kLayerNormEps), w.w1, w.b1));
    if (active(HookPoint::kFfnIntermediateScale)) {
      inter = hooks->transform(HookPoint::kFfnIntermediateScale, l, inter, inter, mask);
    }
    Tensor f = linear(inter, w.w2, w.b2);
    if (active(HookPoint::kPostFfnResidual)) {
      f = hooks->transform(HookPoint::kPostFfnResidual, l, f, f, mask);
    }
    if (active(HookPoint::kParallelToLayer)) {
      f = hooks->transform(HookPoint::kParallelToLayer, l, x, f, mask);
    }
    x = add(x, f);
  }

  if (active(HookPoint::kEmbeddingBoundary)) x = hooks->boundary(x, mask, true);
  state.hidden = layer_norm(x, weights_.final_gamma, weights_.final_beta, kLayerNormEps);
  state.mask = mask;
  return state;
}

NamedTensors TransformerEncoder::named_parameters() const {
  NamedTensors out;
  out.emplace_back("embeddings.token", weights_.token_embedding);
  out.emplace_back("embeddings.position", weights_.position_embedding);
  for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
    const LayerWeights& w = weights_.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.emplace_back(p + "attention_norm.gamma", w.ln1_gamma);
    out.emplace_back(p + "attention_norm.beta", w.ln1_beta);
    out.emplace_back(p + "attention.query.weight", w.wq);
    out.emplace_back(p + "attention.query.bias", w.bq);
    out.emplace_back(p + "attention.key.weight", w.wk);
    out.emplace_back(p + "attention.key.bias", w.bk);
    out.emplace_back(p + "attention.value.weight", w.wv);
    out.emplace_back(p + "attention.value.bias", w.bv);
    out.emplace_back(p + "attention.output.weight", w.wo);
    out.emplace_back(p + "attention.output.bias", w.bo);
    out.emplace_back(p + "ffn_norm.gamma", w.ln2_gamma);
    out.emplace_back(p + "ffn_norm.beta", w.ln2_beta);
    out.emplace_back(p + "ffn.intermediate.weight", w.w1);
    out.emplace_back(p + "ffn.intermediate.bias", w.b1);
    out.emplace_back(p + "ffn.output.weight", w.w2);
    out.emplace_back(p + "ffn.output.bias", w.b2);
  }
  out.emplace_back("final_norm.gamma", weights_.final_gamma);
  out.emplace_back("final_norm.beta", weights_.final_beta);
  return out;
}

std::string_view head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::kClassification: return "classification";
    case HeadKind::kRegression: return "regression";
    case HeadKind::kTagging: return "tagging";
  }
  return "?";
}

HeadKind parse_head_kind(std::string_view text) {
  if (text == "classification") return HeadKind::kClassification;
  if (text == "regression") return HeadKind::kRegression;
  if (text == "tagging") return HeadKind::kTagging;
  throw ConfigError("unknown head kind '" + std::string(text) +
                    "' (expected classification, regression, tagging)");
}

PredictionHead PredictionHead::create(std::string name, HeadKind kind, std::size_t num_labels,
                                      std::size_t hidden, Rng& rng) {
  if (num_labels == 0) throw ConfigError("prediction head needs at least one label");
  if (kind == HeadKind::kRegression && num_labels != 1) {
    throw ConfigError("regression heads have exactly one output");
  }
  PredictionHead head;
  head.name = std::move(name);
  head.kind = kind;
  head.num_labels = num_labels;
  head.weight = normal_tensor({hidden, num_labels}, 1.0 / std::sqrt(static_cast<double>(hidden)),
                              rng);
  head.bias = Tensor({num_labels});
  return head;
}

Tensor pooled_logits(const EncoderState& state, const PredictionHead& head) {
  const std::size_t d = state.hidden.dim(2);
  if (head.weight.dim(0) != d) {
    throw ShapeError("head '" + head.name + "' expects hidden size " +
                     std::to_string(head.weight.dim(0)) + ", encoder produces " +
                     std::to_string(d));
  }
  const std::size_t n = state.hidden.dim(0);
  const std::size_t s = state.hidden.dim(1) - state.prompt_length;
  if (head.kind == HeadKind::kTagging) {
    Tensor tokens = slice(state.hidden, 1, state.prompt_length, s);
    return linear(tokens, head.weight, head.bias);
  }
  Tensor first = reshape(slice(state.hidden, 1, state.prompt_length, 1), {n, d});
  return linear(first, head.weight, head.bias);
}

}  // namespace adapters
