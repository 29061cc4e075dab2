// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/fusion.hpp"

#include <cmath>

#include "adapters/errors.hpp"
#include "adapters/ops.hpp"

namespace adapters {

namespace {

constexpr double kInitStd = 1e-2;

std::string site_prefix(std::size_t layer, HookPoint hook) {
  return "layers." + std::to_string(layer) + "." + std::string(hook_name(hook)) + ".";
}

}  // namespace

Tensor fusion_attention(const Tensor& query, std::span<const Tensor> outputs,
                        const FusionParams& params, const Tensor& residual) {
  if (outputs.empty()) throw ContractError("fusion_attention: no adapter outputs");
  const Shape& shape = query.shape();
  if (shape.size() != 3) throw ShapeError("fusion_attention: query must be [N, S, d]");
  const std::size_t d = shape[2];
  for (const auto& o : outputs) {
    if (o.shape() != shape) {
      throw ShapeError("fusion_attention: output " + shape_str(o.shape()) + " vs query " +
                       shape_str(shape));
    }
  }
  const Tensor q = matmul(query, params.query);
  const Tensor ones(Shape{d, 1}, 1.0);
  std::vector<Tensor> scores;
  std::vector<Tensor> values;
  scores.reserve(outputs.size());
  for (const auto& o : outputs) {
    const Tensor k = matmul(o, params.key);
    scores.push_back(scale(matmul(mul(q, k), ones), 1.0 / std::sqrt(static_cast<double>(d))));
    values.push_back(matmul(o, params.value));
  }
  const Tensor weights = softmax(concat(scores, 2), 2);  // [N, S, n]
  Tensor out = residual;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Tensor w = reshape(slice(weights, 2, i, 1), Shape{shape[0], shape[1]});
    out = add(out, mul_leading(values[i], w));
  }
  return out;
}

FusionLayer FusionLayer::create(std::vector<std::string> members,
                                const std::vector<const Adapter*>& adapters,
                                const ModelDims& dims, Rng& rng) {
  if (members.size() != adapters.size()) {
    throw ContractError("FusionLayer::create: names and adapters differ in length");
  }
  FusionLayer layer;
  layer.members = std::move(members);
  const std::size_t d = dims.hidden;
  constexpr HookPoint kResidualHooks[] = {HookPoint::kPostAttnResidual,
                                          HookPoint::kPostFfnResidual,
                                          HookPoint::kParallelToLayer};
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    for (HookPoint hook : kResidualHooks) {
      bool any = false;
      for (const Adapter* a : adapters) any = any || a->has_hook(hook);
      if (!any) continue;
      FusionParams p;
      p.query = normal_tensor({d, d}, kInitStd, rng);
      p.key = normal_tensor({d, d}, kInitStd, rng);
      p.value = normal_tensor({d, d}, kInitStd * kInitStd, rng);
      for (std::size_t i = 0; i < d; ++i) p.value.at(i, i) += 1.0;
      layer.sites.emplace(std::make_pair(l, hook), std::move(p));
    }
  }
  return layer;
}

NamedTensors FusionLayer::parameters() const {
  NamedTensors out;
  for (const auto& [site, p] : sites) {
    const std::string prefix = site_prefix(site.first, site.second);
    out.emplace_back(prefix + "query", p.query);
    out.emplace_back(prefix + "key", p.key);
    out.emplace_back(prefix + "value", p.value);
  }
  return out;
}

void FusionLayer::set_trainable(bool trainable) const {
  for (auto& [name, t] : parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(trainable);
  }
}

}  // namespace adapters
