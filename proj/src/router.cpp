// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/router.hpp"

#include <algorithm>

#include "adapters/errors.hpp"
#include "adapters/ops.hpp"

namespace adapters {

namespace {

using Branch = Router::Branch;

std::vector<Branch> product(const std::vector<std::vector<Branch>>& parts) {
  std::vector<Branch> out{Branch{}};
  for (const auto& part : parts) {
    std::vector<Branch> next;
    for (const Branch& prefix : out) {
      for (const Branch& b : part) {
        Branch merged = prefix;
        merged.insert(b.begin(), b.end());
        next.push_back(std::move(merged));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<Branch> enumerate(const CompositionNode& node) {
  switch (node.kind) {
    case BlockKind::kParallel: {
      std::vector<Branch> out;
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        for (Branch b : enumerate(node.children[i])) {
          b[&node] = i;
          out.push_back(std::move(b));
        }
      }
      return out;
    }
    case BlockKind::kStack:
    case BlockKind::kBatchSplit:
    case BlockKind::kAverage: {
      std::vector<std::vector<Branch>> parts;
      for (const auto& c : node.children) parts.push_back(enumerate(c));
      return product(parts);
    }
    default:
      return {Branch{}};
  }
}

bool self_hook(HookPoint hook) {
  return hook != HookPoint::kParallelToLayer && hook != HookPoint::kAttnQProj &&
         hook != HookPoint::kAttnVProj;
}

Tensor take(const Tensor& t, const std::vector<std::size_t>& local) {
  return index_select(t, 0, local);
}

std::vector<std::size_t> sub_rows(const std::vector<std::size_t>& rows,
                                  const std::vector<std::size_t>& local) {
  std::vector<std::size_t> out;
  out.reserve(local.size());
  for (auto i : local) out.push_back(rows[i]);
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

// Front-pads [n, S, ...] along axis 1 to `length` with zeros.
Tensor pad_front(const Tensor& x, std::size_t length) {
  const std::size_t have = x.dim(1);
  if (have == length) return x;
  Shape pad_shape = x.shape();
  pad_shape[1] = length - have;
  const Tensor parts[] = {Tensor(pad_shape, 0.0), x};
  return concat(parts, 1);
}

}  // namespace

Router::Router(const AdapterRegistry& registry, const CompositionNode& root, std::size_t batch)
    : registry_(registry), root_(root), batch_(batch), branches_(enumerate(root_)) {
  if (batch == 0) throw InputError("Router: batch must be positive");
}

bool Router::active_at(HookPoint hook) const {
  for (const auto& name : leaf_names(root_)) {
    if (registry_.adapter(name).has_hook(hook)) return true;
  }
  return false;
}

void Router::warn(std::string message) {
  if (std::find(warnings_.begin(), warnings_.end(), message) == warnings_.end()) {
    warnings_.push_back(std::move(message));
  }
}

std::vector<std::string> Router::branch_leaves(std::size_t branch) const {
  const Branch& b = branches_.at(branch);
  std::vector<std::string> out;
  auto walk = [&](auto&& self, const CompositionNode& n) -> void {
    if (n.kind == BlockKind::kLeaf) {
      out.push_back(n.adapter);
    } else if (n.kind == BlockKind::kParallel) {
      self(self, n.children.at(b.at(&n)));
    } else {
      for (const auto& c : n.children) self(self, c);
    }
  };
  walk(walk, root_);
  return out;
}

std::optional<std::string> Router::branch_head(std::size_t branch) const {
  std::optional<std::string> head;
  for (const auto& leaf : branch_leaves(branch)) {
    if (registry_.has_head(leaf)) head = leaf;
  }
  return head;
}

std::vector<std::vector<std::size_t>> Router::partition(const CompositionNode& node,
                                                        const Rows& rows) {
  std::vector<std::vector<std::size_t>> parts(node.children.size());
  if (node.kind == BlockKind::kParallel) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      parts[branches_.at(rows[i] / batch_).at(&node)].push_back(i);
    }
    return parts;
  }
  // BatchSplit: chunks of the distinct samples seen here, in sample order.
  std::vector<std::size_t> samples;
  for (auto r : rows) samples.push_back(r % batch_);
  std::sort(samples.begin(), samples.end());
  samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
  std::size_t total = 0;
  for (auto s : node.sizes) total += s;
  if (total != samples.size()) {
    throw ArithmeticError("BatchSplit sizes sum to " + std::to_string(total) +
                          " but the block receives " + std::to_string(samples.size()) +
                          " samples (" + to_string(node) + ")");
  }
  std::map<std::size_t, std::size_t> child_of;
  std::size_t at = 0;
  for (std::size_t c = 0; c < node.sizes.size(); ++c) {
    for (std::size_t k = 0; k < node.sizes[c]; ++k) child_of[samples[at++]] = c;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) parts[child_of.at(rows[i] % batch_)].push_back(i);
  return parts;
}

// ----------------------------------------------------------------- transform

Tensor Router::run(const CompositionNode& node, const Rows& rows, HookPoint hook,
                   std::size_t layer, const Tensor& src, const Tensor& h, const Tensor& mask) {
  switch (node.kind) {
    case BlockKind::kLeaf: {
      const Adapter& a = registry_.adapter(node.adapter);
      if (!a.has_hook(hook)) return h;
      return a.transform(hook, layer, src, h, mask);
    }
    case BlockKind::kStack: {
      Tensor out = h;
      for (const auto& c : node.children) {
        out = run(c, rows, hook, layer, self_hook(hook) ? out : src, out, mask);
      }
      return out;
    }
    case BlockKind::kParallel:
    case BlockKind::kBatchSplit: {
      const auto parts = partition(node, rows);
      std::vector<Tensor> pieces;
      std::vector<std::vector<std::size_t>> positions;
      for (std::size_t c = 0; c < parts.size(); ++c) {
        if (parts[c].empty()) continue;
        const Tensor s = take(src, parts[c]);
        const Tensor hh = self_hook(hook) ? s : take(h, parts[c]);
        pieces.push_back(
            run(node.children[c], sub_rows(rows, parts[c]), hook, layer, s, hh, take(mask, parts[c])));
        positions.push_back(parts[c]);
      }
      if (pieces.size() == 1) return pieces.front();
      return stitch(pieces, positions, 0, rows.size());
    }
    case BlockKind::kAverage: {
      double total = 0;
      for (double w : node.weights) total += w;
      Tensor out;
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        if (node.weights[c] == 0) continue;
        Tensor term =
            scale(run(node.children[c], rows, hook, layer, src, h, mask), node.weights[c] / total);
        out = out.defined() ? add(out, term) : term;
      }
      return out;
    }
    case BlockKind::kSplit: {
      const std::size_t seq = h.dim(1);
      std::size_t total = 0;
      for (auto s : node.sizes) total += s;
      if (total > seq) {
        throw ArithmeticError("Split sizes sum to " + std::to_string(total) +
                              " but the sequence has " + std::to_string(seq) + " positions (" +
                              to_string(node) + ")");
      }
      std::vector<Tensor> pieces;
      std::size_t start = 0;
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        const std::size_t n = node.sizes[c];
        const Tensor s = slice(src, 1, start, n);
        const Tensor hh = self_hook(hook) ? s : slice(h, 1, start, n);
        pieces.push_back(run(node.children[c], rows, hook, layer, s, hh, slice(mask, 1, start, n)));
        start += n;
      }
      if (start < seq) {
        warn("Split covers " + std::to_string(start) + " of " + std::to_string(seq) +
             " positions; the remaining positions pass through unadapted (" + to_string(node) +
             ")");
        pieces.push_back(slice(h, 1, start, seq - start));
      }
      return pieces.size() == 1 ? pieces.front() : concat(pieces, 1);
    }
    case BlockKind::kFuse: {
      const auto names = leaf_names(node);
      const FusionLayer& fusion = registry_.fusion(fusion_key(names));
      auto site = fusion.sites.find({layer, hook});
      if (site == fusion.sites.end()) return h;
      std::vector<Tensor> deltas;
      for (const auto& name : names) {
        Tensor d = registry_.adapter(name).delta(hook, layer, src, h);
        deltas.push_back(d.defined() ? d : Tensor(h.shape(), 0.0));
      }
      return fusion_attention(src, deltas, site->second, h);
    }
  }
  return h;
}

Tensor Router::transform(HookPoint hook, std::size_t layer, const Tensor& src, const Tensor& h,
                         const Tensor& mask) {
  return run(root_, iota(h.dim(0)), hook, layer, src, h, mask);
}

// ------------------------------------------------------------------- prepend

SequenceExtension Router::run_prepend(const CompositionNode& node, const Rows& rows,
                                      const Tensor& x, const Tensor& mask) {
  switch (node.kind) {
    case BlockKind::kLeaf:
      return registry_.adapter(node.adapter).prepend(x, mask);
    case BlockKind::kStack: {
      SequenceExtension ext{x, mask};
      for (const auto& c : node.children) ext = run_prepend(c, rows, ext.hidden, ext.mask);
      return ext;
    }
    case BlockKind::kParallel:
    case BlockKind::kBatchSplit: {
      const auto parts = partition(node, rows);
      std::vector<Tensor> hidden, masks;
      std::vector<std::vector<std::size_t>> positions;
      for (std::size_t c = 0; c < parts.size(); ++c) {
        if (parts[c].empty()) continue;
        SequenceExtension e = run_prepend(node.children[c], sub_rows(rows, parts[c]),
                                          take(x, parts[c]), take(mask, parts[c]));
        if (!hidden.empty() && e.hidden.dim(1) != hidden.front().dim(1)) {
          throw CompositionError(std::string(block_name(node.kind)) +
                                 ": every child must add the same prompt length (" +
                                 to_string(node) + ")");
        }
        hidden.push_back(e.hidden);
        masks.push_back(e.mask);
        positions.push_back(parts[c]);
      }
      if (hidden.size() == 1) return {hidden.front(), masks.front()};
      return {stitch(hidden, positions, 0, rows.size()), stitch(masks, positions, 0, rows.size())};
    }
    default:
      return {x, mask};
  }
}

SequenceExtension Router::prepend(const Tensor& embedded, const Tensor& mask) {
  return run_prepend(root_, iota(embedded.dim(0)), embedded, mask);
}

// ------------------------------------------------------------------ boundary

Tensor Router::run_boundary(const CompositionNode& node, const Rows& rows, const Tensor& x,
                            bool inverse) {
  switch (node.kind) {
    case BlockKind::kLeaf: {
      const Adapter& a = registry_.adapter(node.adapter);
      return a.has_hook(HookPoint::kEmbeddingBoundary) ? a.boundary(x, inverse) : x;
    }
    case BlockKind::kStack: {
      Tensor out = x;
      if (!inverse) {
        for (const auto& c : node.children) out = run_boundary(c, rows, out, false);
      } else {
        for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
          out = run_boundary(*it, rows, out, true);
        }
      }
      return out;
    }
    case BlockKind::kParallel:
    case BlockKind::kBatchSplit: {
      const auto parts = partition(node, rows);
      std::vector<Tensor> pieces;
      std::vector<std::vector<std::size_t>> positions;
      for (std::size_t c = 0; c < parts.size(); ++c) {
        if (parts[c].empty()) continue;
        pieces.push_back(
            run_boundary(node.children[c], sub_rows(rows, parts[c]), take(x, parts[c]), inverse));
        positions.push_back(parts[c]);
      }
      if (pieces.size() == 1) return pieces.front();
      return stitch(pieces, positions, 0, rows.size());
    }
    case BlockKind::kSplit: {
      // Invertible layers are token-local, so each span maps through its own child.
      const std::size_t seq = x.dim(1);
      std::vector<Tensor> pieces;
      std::size_t start = 0;
      for (std::size_t c = 0; c < node.children.size() && start < seq; ++c) {
        const std::size_t n = std::min(node.sizes[c], seq - start);
        pieces.push_back(run_boundary(node.children[c], rows, slice(x, 1, start, n), inverse));
        start += n;
      }
      if (start < seq) pieces.push_back(slice(x, 1, start, seq - start));
      return pieces.size() == 1 ? pieces.front() : concat(pieces, 1);
    }
    default:
      return x;
  }
}

Tensor Router::boundary(const Tensor& x, const Tensor& /*mask*/, bool inverse) {
  return run_boundary(root_, iota(x.dim(0)), x, inverse);
}

// ------------------------------------------------------------------- prefix

KeyValueExtension Router::run_kv(const CompositionNode& node, const Rows& rows,
                                 std::size_t layer, const Tensor& keys, const Tensor& values,
                                 const Tensor& key_mask, const Tensor& gate_src,
                                 const Tensor& query_mask) {
  switch (node.kind) {
    case BlockKind::kLeaf: {
      const Adapter& a = registry_.adapter(node.adapter);
      if (!a.has_hook(HookPoint::kAttnKV)) return {keys, values, key_mask};
      return a.extend_kv(layer, keys, values, key_mask, gate_src, query_mask);
    }
    case BlockKind::kStack: {
      KeyValueExtension ext{keys, values, key_mask};
      for (const auto& c : node.children) {
        ext = run_kv(c, rows, layer, ext.keys, ext.values, ext.key_mask, gate_src, query_mask);
      }
      return ext;
    }
    case BlockKind::kParallel:
    case BlockKind::kBatchSplit: {
      const auto parts = partition(node, rows);
      std::vector<KeyValueExtension> exts;
      std::vector<std::vector<std::size_t>> positions;
      std::size_t longest = 0;
      for (std::size_t c = 0; c < parts.size(); ++c) {
        if (parts[c].empty()) continue;
        exts.push_back(run_kv(node.children[c], sub_rows(rows, parts[c]), layer,
                              take(keys, parts[c]), take(values, parts[c]),
                              take(key_mask, parts[c]), take(gate_src, parts[c]),
                              take(query_mask, parts[c])));
        longest = std::max(longest, exts.back().keys.dim(1));
        positions.push_back(parts[c]);
      }
      if (exts.size() == 1) return exts.front();
      // Branches may carry prefixes of different lengths: pad in front with
      // masked-out zero positions so the rows stack.
      std::vector<Tensor> k, v, m;
      for (const auto& e : exts) {
        k.push_back(pad_front(e.keys, longest));
        v.push_back(pad_front(e.values, longest));
        m.push_back(pad_front(e.key_mask, longest));
      }
      return {stitch(k, positions, 0, rows.size()), stitch(v, positions, 0, rows.size()),
              stitch(m, positions, 0, rows.size())};
    }
    default:
      return {keys, values, key_mask};
  }
}

KeyValueExtension Router::extend_kv(std::size_t layer, const Tensor& keys, const Tensor& values,
                                    const Tensor& key_mask, const Tensor& gate_src,
                                    const Tensor& query_mask) {
  return run_kv(root_, iota(keys.dim(0)), layer, keys, values, key_mask, gate_src, query_mask);
}

}  // namespace adapters
