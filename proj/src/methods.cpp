// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/methods.hpp"

#include "adapters/errors.hpp"

namespace adapters {

Tensor phm_weight(const PhmParams& p) {
  if (p.rule.empty() || p.rule.size() != p.left.size() || p.rule.size() != p.right.size()) {
    throw ShapeError("phm: rule, left and right factor counts must match and be non-zero");
  }
  Tensor w;
  for (std::size_t i = 0; i < p.rule.size(); ++i) {
    Tensor term = kron(p.rule[i], matmul(p.left[i], p.right[i]));
    w = w.defined() ? add(w, term) : term;
  }
  return w;
}

Tensor phm_linear(const Tensor& x, const PhmParams& p) {
  return linear(x, phm_weight(p), p.bias);
}

Tensor project(const Tensor& x, const Projection& p) {
  if (const auto* dense = std::get_if<DenseProjection>(&p)) {
    return linear(x, dense->weight, dense->bias);
  }
  return phm_linear(x, std::get<PhmParams>(p));
}

Tensor bottleneck_delta(const Tensor& x, const BottleneckParams& p) {
  Tensor out = project(activate(project(x, p.down), p.nonlinearity), p.up);
  return p.scaling == 1.0 ? out : scale(out, p.scaling);
}

Tensor bottleneck_forward(const Tensor& h, const BottleneckParams& p, const Tensor& residual) {
  Tensor delta = bottleneck_delta(h, p);
  if (delta.shape() != residual.shape()) {
    throw ShapeError("bottleneck: output " + shape_str(delta.shape()) +
                     " does not match residual " + shape_str(residual.shape()));
  }
  return add(residual, delta);
}

Tensor invertible_apply(const Tensor& x, const InvertibleParams& p, Direction dir) {
  const std::size_t axis = x.rank() - 1;
  const std::size_t width = x.dim(axis);
  if (width % 2 != 0) {
    throw ShapeError("invertible adapter: channel count " + std::to_string(width) + " is odd");
  }
  const std::size_t half = width / 2;
  const Tensor a = slice(x, axis, 0, half);
  const Tensor b = slice(x, axis, half, half);
  Tensor parts[2];
  if (dir == Direction::kForward) {
    parts[0] = add(a, bottleneck_delta(b, p.f));
    parts[1] = add(b, bottleneck_delta(parts[0], p.g));
  } else {
    parts[1] = sub(b, bottleneck_delta(a, p.g));
    parts[0] = sub(a, bottleneck_delta(parts[1], p.f));
  }
  return concat(parts, axis);
}

SequenceExtension prompt_extend(const Tensor& embedded, const Tensor& prompt, const Tensor& mask,
                                std::size_t max_seq) {
  const std::size_t n = embedded.dim(0);
  const std::size_t s = embedded.dim(1);
  const std::size_t p = prompt.defined() ? prompt.dim(0) : 0;
  if (p + s > max_seq) {
    throw CapacityError("prompt of length " + std::to_string(p) + " plus sequence " +
                        std::to_string(s) + " exceeds max_seq " + std::to_string(max_seq));
  }
  if (p == 0) return {embedded, mask};
  if (prompt.dim(1) != embedded.dim(2)) {
    throw ShapeError("prompt width " + std::to_string(prompt.dim(1)) +
                     " does not match hidden size " + std::to_string(embedded.dim(2)));
  }
  const Tensor hidden_parts[] = {repeat_leading(prompt, n), embedded};
  const Tensor mask_parts[] = {Tensor({n, p}, 1.0), mask};
  return {concat(hidden_parts, 1), concat(mask_parts, 1)};
}

std::size_t prefix_length(const PrefixParams& p) {
  if (p.flat) return p.flat_kv.empty() ? 0 : p.flat_kv.front().dim(0);
  return p.embedding.defined() ? p.embedding.dim(0) : 0;
}

Tensor prefix_states(const PrefixParams& p) {
  if (p.flat) return concat(p.flat_kv, 1);
  return linear(tanh(linear(p.embedding, p.w_down, p.b_down)), p.w_up, p.b_up);
}

KeyValueExtension prefix_extend(const Tensor& keys, const Tensor& values, const Tensor& key_mask,
                                const Tensor& states, std::size_t layer, std::size_t hidden,
                                const Tensor& gate) {
  if (!states.defined()) return {keys, values, key_mask};
  const std::size_t n = keys.dim(0);
  const std::size_t p = states.dim(0);
  if (2 * (layer + 1) * hidden > states.dim(1)) {
    throw ShapeError("prefix: layer " + std::to_string(layer) + " out of range");
  }
  Tensor pk = repeat_leading(slice(states, 1, 2 * layer * hidden, hidden), n);
  Tensor pv = repeat_leading(slice(states, 1, 2 * layer * hidden + hidden, hidden), n);
  if (gate.defined()) {
    pk = mul_leading(pk, gate);
    pv = mul_leading(pv, gate);
  }
  const Tensor k_parts[] = {pk, keys};
  const Tensor v_parts[] = {pv, values};
  const Tensor m_parts[] = {Tensor({n, p}, 1.0), key_mask};
  return {concat(k_parts, 1), concat(v_parts, 1), concat(m_parts, 1)};
}

Tensor lora_delta(const Tensor& x, const LoraParams& p) {
  return scale(matmul(matmul(x, p.a), p.b), p.scale());
}

Tensor lora_forward(const Tensor& x, const Tensor& w0, const Tensor& b0, const LoraParams& p) {
  if (p.merged) {
    throw StateError("lora_forward: weights are merged into the base projection; "
                     "the low-rank path would be counted twice");
  }
  return add(linear(x, w0, b0), lora_delta(x, p));
}

namespace {

void lora_apply(Tensor& w0, const LoraParams& p, double sign) {
  NoGradScope no_grad;
  const Tensor ab = matmul(p.a, p.b);
  if (ab.shape() != w0.shape()) {
    throw ShapeError("lora merge: delta " + shape_str(ab.shape()) + " does not match weight " +
                     shape_str(w0.shape()));
  }
  auto w = w0.values();
  const auto delta = ab.values();
  const double s = sign * p.scale();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += s * delta[i];
}

}  // namespace

void lora_merge(Tensor& w0, LoraParams& p) {
  if (p.merged) throw StateError("lora_merge: already merged");
  lora_apply(w0, p, 1.0);
  p.merged = true;
}

void lora_unmerge(Tensor& w0, LoraParams& p) {
  if (!p.merged) throw StateError("lora_unmerge: not merged");
  lora_apply(w0, p, -1.0);
  p.merged = false;
}

Tensor ia3_forward(const Tensor& h, const Tensor& scale) {
  if (scale.rank() != 1 || scale.dim(0) != h.dim(h.rank() - 1)) {
    throw ShapeError("ia3: scale " + shape_str(scale.shape()) + " does not match activation " +
                     shape_str(h.shape()));
  }
  return mul_trailing(h, scale);
}

Tensor unipelt_gate(const Tensor& x, const Tensor& weight, const Tensor& mask) {
  const Tensor g = sigmoid(matmul(x, weight));  // [N, S, 1]
  const Tensor pooled = masked_mean(g, mask);   // [N, 1]
  return reshape(pooled, {x.dim(0)});
}

}  // namespace adapters
