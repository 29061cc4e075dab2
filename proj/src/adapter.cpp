// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/adapter.hpp"

#include <cmath>

#include "adapters/errors.hpp"

namespace adapters {

namespace {

double fan_in_bound(std::size_t in) { return 1.0 / std::sqrt(static_cast<double>(in)); }

DenseProjection dense(std::size_t in, std::size_t out, bool zero, Rng& rng) {
  DenseProjection p;
  p.weight = zero ? Tensor({in, out}) : uniform_tensor({in, out}, -fan_in_bound(in),
                                                       fan_in_bound(in), rng);
  p.bias = Tensor({out});
  return p;
}

BottleneckParams dense_bottleneck(std::size_t d, std::size_t b, Activation f, double scaling,
                                  Rng& rng) {
  return {dense(d, b, false, rng), dense(b, d, true, rng), f, scaling};
}

std::vector<Tensor> phm_rule(std::size_t n, Rng& rng) {
  std::vector<Tensor> rule;
  for (std::size_t i = 0; i < n; ++i) {
    rule.push_back(normal_tensor({n, n}, 1.0 / std::sqrt(static_cast<double>(n)), rng));
  }
  return rule;
}

PhmParams phm(std::size_t in, std::size_t out, const CompacterConfig& c,
              const std::vector<Tensor>& shared_rule, bool zero_right, Rng& rng) {
  const std::size_t n = c.phm_dim;
  PhmParams p;
  p.rule = c.share_a_globally ? shared_rule : phm_rule(n, rng);
  const double std = std::pow(static_cast<double>(in), -0.25);
  for (std::size_t i = 0; i < n; ++i) {
    p.left.push_back(normal_tensor({in / n, c.factor_rank}, std, rng));
    p.right.push_back(zero_right ? Tensor({c.factor_rank, out / n})
                                 : normal_tensor({c.factor_rank, out / n}, std, rng));
  }
  p.bias = Tensor({out});
  return p;
}

LoraParams lora(std::size_t d, const LoraConfig& c, Rng& rng) {
  LoraParams p;
  p.a = uniform_tensor({d, c.r}, -fan_in_bound(d), fan_in_bound(d), rng);
  p.b = Tensor({c.r, d});
  p.alpha = c.alpha;
  p.rank = c.r;
  return p;
}

MethodInstance instantiate(const AdapterConfig& config, bool gated, const ModelDims& dims,
                           Rng& rng) {
  const std::size_t L = dims.num_layers;
  const std::size_t d = dims.hidden;
  MethodInstance m;
  m.config = config;
  m.gated = gated;
  m.layers.resize(L);
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          const std::size_t b = d / c.reduction_factor;
          for (auto& layer : m.layers) {
            auto make = [&] { return dense_bottleneck(d, b, c.nonlinearity, c.scaling, rng); };
            if (c.placement == Placement::kDouble) layer.post_attn = make();
            if (c.placement == Placement::kParallel) {
              layer.parallel = make();
            } else {
              layer.post_ffn = make();
            }
          }
          if (c.with_invertible) {
            const std::size_t h = d / 2;
            const std::size_t w = h / c.inv_reduction_factor;
            m.invertible = InvertibleParams{
                dense_bottleneck(h, w, Activation::kRelu, 1.0, rng),
                dense_bottleneck(h, w, Activation::kRelu, 1.0, rng)};
          }
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          m.prompt = uniform_tensor({c.prompt_length, d}, -0.5, 0.5, rng);
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          if (L == 0) return;
          PrefixParams p;
          p.flat = c.flat;
          p.num_layers = L;
          p.hidden = d;
          if (c.flat) {
            for (std::size_t l = 0; l < L; ++l) {
              p.flat_kv.push_back(normal_tensor({c.prefix_length, 2 * d}, 1.0, rng));
            }
          } else {
            const std::size_t b = c.bottleneck_size;
            p.embedding = normal_tensor({c.prefix_length, d}, 1.0, rng);
            p.w_down = uniform_tensor({d, b}, -fan_in_bound(d), fan_in_bound(d), rng);
            p.b_down = Tensor({b});
            p.w_up = uniform_tensor({b, 2 * L * d}, -fan_in_bound(b), fan_in_bound(b), rng);
            p.b_up = Tensor({2 * L * d});
          }
          m.prefix = std::move(p);
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          if (L == 0) return;
          const std::size_t b = d / c.reduction_factor;
          if (c.share_a_globally) m.phm_rule = phm_rule(c.phm_dim, rng);
          for (auto& layer : m.layers) {
            auto make = [&] {
              return BottleneckParams{phm(d, b, c, m.phm_rule, false, rng),
                                      phm(b, d, c, m.phm_rule, true, rng), c.nonlinearity, 1.0};
            };
            layer.post_attn = make();
            layer.post_ffn = make();
          }
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          for (auto& layer : m.layers) {
            if (c.target_query) layer.lora_query = lora(d, c, rng);
            if (c.target_value) layer.lora_value = lora(d, c, rng);
          }
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          for (auto& layer : m.layers) {
            if (c.keys) layer.ia3_keys = Tensor({d}, 1.0);
            if (c.values) layer.ia3_values = Tensor({d}, 1.0);
            if (c.intermediate) layer.ia3_intermediate = Tensor({dims.intermediate}, 1.0);
          }
        } else {
          throw ConfigError("unions cannot be nested");
        }
      },
      config.method);
  if (gated) {
    for (auto& layer : m.layers) {
      layer.gate = uniform_tensor({d, 1}, -fan_in_bound(d), fan_in_bound(d), rng);
    }
  }
  return m;
}

void add_projection(NamedTensors& out, const std::string& p, const Projection& proj,
                    bool shared_rule) {
  if (const auto* dense = std::get_if<DenseProjection>(&proj)) {
    out.emplace_back(p + ".weight", dense->weight);
    out.emplace_back(p + ".bias", dense->bias);
    return;
  }
  const auto& phm = std::get<PhmParams>(proj);
  if (!shared_rule) {
    for (std::size_t i = 0; i < phm.rule.size(); ++i) {
      out.emplace_back(p + ".rule." + std::to_string(i), phm.rule[i]);
    }
  }
  for (std::size_t i = 0; i < phm.left.size(); ++i) {
    out.emplace_back(p + ".left." + std::to_string(i), phm.left[i]);
    out.emplace_back(p + ".right." + std::to_string(i), phm.right[i]);
  }
  out.emplace_back(p + ".bias", phm.bias);
}

void add_bottleneck(NamedTensors& out, const std::string& p, const BottleneckParams& b,
                    bool shared_rule) {
  add_projection(out, p + ".down", b.down, shared_rule);
  add_projection(out, p + ".up", b.up, shared_rule);
}

// Input the member's gate reads at this hook.
bool self_hook(HookPoint hook) {
  return hook != HookPoint::kParallelToLayer && hook != HookPoint::kAttnQProj &&
         hook != HookPoint::kAttnVProj;
}

}  // namespace

Adapter::Adapter(std::string name, AdapterConfig config, const ModelDims& dims, Rng& rng)
    : name_(std::move(name)), config_(std::move(config)), dims_(dims) {
  if (name_.empty()) throw ConfigError("adapter name must not be empty");
  validate_config(config_, dims_);
  if (const auto* u = std::get_if<UnionConfig>(&config_.method)) {
    for (const auto& m : u->members) members_.push_back(instantiate(m, u->gated, dims_, rng));
  } else {
    members_.push_back(instantiate(config_, false, dims_, rng));
  }
  for (HookPoint h : config_hooks(config_)) hooks_.insert(h);
}

NamedTensors Adapter::parameters() const {
  NamedTensors out;
  const bool is_union = config_.is<UnionConfig>();
  for (std::size_t mi = 0; mi < members_.size(); ++mi) {
    const MethodInstance& m = members_[mi];
    const std::string root = is_union ? "members." + std::to_string(mi) + "." : "";
    const bool shared = !m.phm_rule.empty();
    for (std::size_t i = 0; i < m.phm_rule.size(); ++i) {
      out.emplace_back(root + "phm_rule." + std::to_string(i), m.phm_rule[i]);
    }
    if (m.prompt.defined()) out.emplace_back(root + "prompt", m.prompt);
    if (m.prefix) {
      const PrefixParams& p = *m.prefix;
      if (p.flat) {
        for (std::size_t l = 0; l < p.flat_kv.size(); ++l) {
          out.emplace_back(root + "prefix.layers." + std::to_string(l) + ".kv", p.flat_kv[l]);
        }
      } else {
        out.emplace_back(root + "prefix.embedding", p.embedding);
        out.emplace_back(root + "prefix.down.weight", p.w_down);
        out.emplace_back(root + "prefix.down.bias", p.b_down);
        out.emplace_back(root + "prefix.up.weight", p.w_up);
        out.emplace_back(root + "prefix.up.bias", p.b_up);
      }
    }
    if (m.invertible) {
      add_bottleneck(out, root + "invertible.f", m.invertible->f, false);
      add_bottleneck(out, root + "invertible.g", m.invertible->g, false);
    }
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const LayerModules& layer = m.layers[l];
      const std::string p = root + "layers." + std::to_string(l) + ".";
      if (layer.post_attn) add_bottleneck(out, p + "post_attn", *layer.post_attn, shared);
      if (layer.post_ffn) add_bottleneck(out, p + "post_ffn", *layer.post_ffn, shared);
      if (layer.parallel) add_bottleneck(out, p + "parallel", *layer.parallel, shared);
      if (layer.lora_query) {
        out.emplace_back(p + "lora_query.a", layer.lora_query->a);
        out.emplace_back(p + "lora_query.b", layer.lora_query->b);
      }
      if (layer.lora_value) {
        out.emplace_back(p + "lora_value.a", layer.lora_value->a);
        out.emplace_back(p + "lora_value.b", layer.lora_value->b);
      }
      if (layer.ia3_keys.defined()) out.emplace_back(p + "ia3_keys", layer.ia3_keys);
      if (layer.ia3_values.defined()) out.emplace_back(p + "ia3_values", layer.ia3_values);
      if (layer.ia3_intermediate.defined()) {
        out.emplace_back(p + "ia3_intermediate", layer.ia3_intermediate);
      }
      if (layer.gate.defined()) out.emplace_back(p + "gate", layer.gate);
    }
  }
  return out;
}

std::size_t Adapter::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

void Adapter::set_trainable(bool trainable) const {
  for (auto& [name, t] : parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(trainable);
  }
}

std::size_t Adapter::prompt_length() const {
  std::size_t p = 0;
  for (const auto& m : members_) p += m.prompt.defined() ? m.prompt.dim(0) : 0;
  return p;
}

std::size_t Adapter::prefix_length() const {
  std::size_t p = 0;
  for (const auto& m : members_) p += m.prefix ? adapters::prefix_length(*m.prefix) : 0;
  return p;
}

bool Adapter::is_pure_bottleneck() const {
  if (members_.size() != 1 || config_.is<UnionConfig>()) return false;
  if (config_.is<CompacterConfig>()) return true;
  return config_.is<BottleneckConfig>() && !config_.as<BottleneckConfig>().with_invertible;
}

Tensor Adapter::member_delta(const MethodInstance& m, HookPoint hook, std::size_t layer,
                             const Tensor& src, const Tensor& h, const Tensor& mask) const {
  const LayerModules& lm = m.layers.at(layer);
  Tensor delta;
  switch (hook) {
    case HookPoint::kPostAttnResidual:
      if (lm.post_attn) delta = bottleneck_delta(h, *lm.post_attn);
      break;
    case HookPoint::kPostFfnResidual:
      if (lm.post_ffn) delta = bottleneck_delta(h, *lm.post_ffn);
      break;
    case HookPoint::kParallelToLayer:
      if (lm.parallel) delta = bottleneck_delta(src, *lm.parallel);
      break;
    case HookPoint::kAttnQProj:
      if (lm.lora_query && !lm.lora_query->merged) delta = lora_delta(src, *lm.lora_query);
      break;
    case HookPoint::kAttnVProj:
      if (lm.lora_value && !lm.lora_value->merged) delta = lora_delta(src, *lm.lora_value);
      break;
    case HookPoint::kAttnKeysScale:
      if (lm.ia3_keys.defined()) delta = sub(ia3_forward(h, lm.ia3_keys), h);
      break;
    case HookPoint::kAttnValuesScale:
      if (lm.ia3_values.defined()) delta = sub(ia3_forward(h, lm.ia3_values), h);
      break;
    case HookPoint::kFfnIntermediateScale:
      if (lm.ia3_intermediate.defined()) delta = sub(ia3_forward(h, lm.ia3_intermediate), h);
      break;
    default:
      break;
  }
  if (delta.defined() && m.gated) {
    const Tensor& gate_input = self_hook(hook) ? h : src;
    delta = mul_leading(delta, unipelt_gate(gate_input, lm.gate, mask));
  }
  return delta;
}

Tensor Adapter::transform(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h,
                          const Tensor& mask) const {
  Tensor out = h;
  const bool scale_hook = hook == HookPoint::kAttnKeysScale ||
                          hook == HookPoint::kAttnValuesScale ||
                          hook == HookPoint::kFfnIntermediateScale;
  for (const MethodInstance& m : members_) {
    const Tensor& s = self_hook(hook) ? out : src;
    if (scale_hook && !m.gated) {
      const LayerModules& lm = m.layers.at(layer);
      const Tensor& l = hook == HookPoint::kAttnKeysScale     ? lm.ia3_keys
                        : hook == HookPoint::kAttnValuesScale ? lm.ia3_values
                                                              : lm.ia3_intermediate;
      if (l.defined()) out = ia3_forward(out, l);
      continue;
    }
    Tensor d = member_delta(m, hook, layer, s, out, mask);
    if (d.defined()) out = add(out, d);
  }
  return out;
}

Tensor Adapter::delta(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h) const {
  Tensor total;
  for (const MethodInstance& m : members_) {
    Tensor d = member_delta(m, hook, layer, src, h, Tensor());
    if (d.defined()) total = total.defined() ? add(total, d) : d;
  }
  return total;
}

SequenceExtension Adapter::prepend(const Tensor& embedded, const Tensor& mask) const {
  SequenceExtension ext{embedded, mask};
  for (const MethodInstance& m : members_) {
    if (m.prompt.defined()) ext = prompt_extend(ext.hidden, m.prompt, ext.mask, dims_.max_seq);
  }
  return ext;
}

Tensor Adapter::boundary(const Tensor& x, bool inverse) const {
  Tensor out = x;
  if (!inverse) {
    for (const MethodInstance& m : members_) {
      if (m.invertible) out = invertible_apply(out, *m.invertible, Direction::kForward);
    }
  } else {
    for (auto it = members_.rbegin(); it != members_.rend(); ++it) {
      if (it->invertible) out = invertible_apply(out, *it->invertible, Direction::kInverse);
    }
  }
  return out;
}

KeyValueExtension Adapter::extend_kv(std::size_t layer, const Tensor& keys, const Tensor& values,
                                     const Tensor& key_mask, const Tensor& gate_src,
                                     const Tensor& query_mask) const {
  KeyValueExtension ext{keys, values, key_mask};
  for (const MethodInstance& m : members_) {
    if (!m.prefix) continue;
    Tensor gate;
    if (m.gated) gate = unipelt_gate(gate_src, m.layers.at(layer).gate, query_mask);
    ext = prefix_extend(ext.keys, ext.values, ext.key_mask, prefix_states(*m.prefix), layer,
                        dims_.hidden, gate);
  }
  return ext;
}

bool Adapter::has_lora() const {
  for (const auto& m : members_) {
    if (m.config.is<LoraConfig>()) return true;
  }
  return false;
}

bool Adapter::merged() const {
  for (const auto& m : members_) {
    for (const auto& l : m.layers) {
      if ((l.lora_query && l.lora_query->merged) || (l.lora_value && l.lora_value->merged)) {
        return true;
      }
    }
  }
  return false;
}

void Adapter::merge_into(EncoderWeights& weights) {
  if (!has_lora()) throw StateError("adapter '" + name_ + "' has no LoRA modules to merge");
  if (merged()) throw StateError("adapter '" + name_ + "' is already merged");
  for (const auto& m : members_) {
    if (m.gated && m.config.is<LoraConfig>()) {
      throw StateError("adapter '" + name_ + "': gated LoRA depends on the input and cannot be "
                       "merged");
    }
  }
  for (auto& m : members_) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      if (m.layers[l].lora_query) lora_merge(weights.layers[l].wq, *m.layers[l].lora_query);
      if (m.layers[l].lora_value) lora_merge(weights.layers[l].wv, *m.layers[l].lora_value);
    }
  }
}

void Adapter::unmerge_from(EncoderWeights& weights) {
  if (!merged()) throw StateError("adapter '" + name_ + "' is not merged");
  for (auto& m : members_) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      if (m.layers[l].lora_query) lora_unmerge(weights.layers[l].wq, *m.layers[l].lora_query);
      if (m.layers[l].lora_value) lora_unmerge(weights.layers[l].wv, *m.layers[l].lora_value);
    }
  }
}

}  // namespace adapters
