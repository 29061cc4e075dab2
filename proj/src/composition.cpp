// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/composition.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "adapters/errors.hpp"
#include "adapters/registry.hpp"

namespace adapters {

std::string_view block_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::kLeaf: return "Leaf";
    case BlockKind::kStack: return "Stack";
    case BlockKind::kFuse: return "Fuse";
    case BlockKind::kSplit: return "Split";
    case BlockKind::kBatchSplit: return "BatchSplit";
    case BlockKind::kParallel: return "Parallel";
    case BlockKind::kAverage: return "Average";
  }
  return "?";
}

CompositionNode CompositionNode::leaf(std::string name) {
  CompositionNode n;
  n.adapter = std::move(name);
  return n;
}

namespace {

CompositionNode block(BlockKind kind, std::vector<CompositionNode> children) {
  CompositionNode n;
  n.kind = kind;
  n.children = std::move(children);
  return n;
}

}  // namespace

CompositionNode CompositionNode::stack(std::vector<CompositionNode> children) {
  return block(BlockKind::kStack, std::move(children));
}
CompositionNode CompositionNode::fuse(std::vector<CompositionNode> children) {
  return block(BlockKind::kFuse, std::move(children));
}
CompositionNode CompositionNode::split(std::vector<CompositionNode> children,
                                       std::vector<std::size_t> sizes) {
  auto n = block(BlockKind::kSplit, std::move(children));
  n.sizes = std::move(sizes);
  return n;
}
CompositionNode CompositionNode::batch_split(std::vector<CompositionNode> children,
                                             std::vector<std::size_t> sizes) {
  auto n = block(BlockKind::kBatchSplit, std::move(children));
  n.sizes = std::move(sizes);
  return n;
}
CompositionNode CompositionNode::parallel(std::vector<CompositionNode> children) {
  return block(BlockKind::kParallel, std::move(children));
}
CompositionNode CompositionNode::average(std::vector<CompositionNode> children,
                                         std::vector<double> weights) {
  auto n = block(BlockKind::kAverage, std::move(children));
  n.weights = std::move(weights);
  return n;
}

bool nesting_allowed(BlockKind parent, BlockKind child) {
  if (parent == BlockKind::kLeaf) return false;
  if (child == BlockKind::kLeaf) return true;
  auto nestable = [](BlockKind k) {
    return k == BlockKind::kStack || k == BlockKind::kParallel || k == BlockKind::kBatchSplit ||
           k == BlockKind::kAverage;
  };
  return nestable(parent) && nestable(child);
}

// ------------------------------------------------------------------- parser

namespace {

bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

std::optional<BlockKind> kind_from_name(std::string_view s) {
  for (BlockKind k : kAllBlockKinds) {
    if (k != BlockKind::kLeaf && block_name(k) == s) return k;
  }
  return std::nullopt;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  CompositionNode parse() {
    CompositionNode node = parse_node();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return node;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw CompositionError("composition parse error at column " + std::to_string(pos_ + 1) +
                           ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      fail(std::string("expected '") + c + "'" +
           (pos_ < text_.size() ? std::string(", found '") + text_[pos_] + "'"
                                : std::string(", found end of input")));
    }
  }

  std::string parse_name() {
    skip_space();
    if (pos_ < text_.size() && (text_[pos_] == '"' || text_[pos_] == '\'')) {
      const char quote = text_[pos_++];
      const std::size_t start = pos_;
      while (pos_ < text_.size() && text_[pos_] != quote) ++pos_;
      if (pos_ == text_.size()) fail("unterminated quoted name");
      std::string name(text_.substr(start, pos_ - start));
      ++pos_;
      if (name.empty()) fail("empty adapter name");
      return name;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && name_char(text_[pos_])) ++pos_;
    if (start == pos_) {
      fail(pos_ < text_.size() ? "expected an adapter name or block, found '" +
                                     std::string(1, text_[pos_]) + "'"
                               : "expected an adapter name or block, found end of input");
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  double parse_number() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '.' || text_[pos_] == 'e' ||
                                   text_[pos_] == 'E' || text_[pos_] == '-' ||
                                   text_[pos_] == '+')) {
      ++pos_;
    }
    double v = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (start == pos_ || ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("expected a number");
    }
    return v;
  }

  std::vector<double> parse_numbers(char terminator) {
    std::vector<double> out{parse_number()};
    while (true) {
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == terminator) break;
      expect(',');
      out.push_back(parse_number());
    }
    return out;
  }

  void set_numbers(CompositionNode& node, const std::vector<double>& values, std::size_t at) {
    if (node.kind == BlockKind::kAverage) {
      node.weights = values;
      return;
    }
    if (node.kind != BlockKind::kSplit && node.kind != BlockKind::kBatchSplit) {
      pos_ = at;
      fail(std::string(block_name(node.kind)) + " takes no numeric arguments");
    }
    for (double v : values) {
      if (v < 0 || v != std::floor(v)) {
        pos_ = at;
        fail(std::string(block_name(node.kind)) + " sizes must be non-negative integers");
      }
      node.sizes.push_back(static_cast<std::size_t>(v));
    }
  }

  CompositionNode parse_node() {
    skip_space();
    const std::size_t start = pos_;
    const std::string name = parse_name();
    const bool quoted = text_[start] == '"' || text_[start] == '\'';
    skip_space();
    const auto kind = quoted ? std::nullopt : kind_from_name(name);
    if (!kind || pos_ >= text_.size() || text_[pos_] != '(') {
      if (!kind && pos_ < text_.size() && text_[pos_] == '(') {
        fail("unknown block '" + name + "' (expected Stack, Fuse, Split, BatchSplit, Parallel, "
             "Average)");
      }
      return CompositionNode::leaf(name);
    }
    ++pos_;  // '('
    CompositionNode node;
    node.kind = *kind;
    bool numbers_seen = false;
    while (true) {
      skip_space();
      const std::size_t item_start = pos_;
      // keyword=[...] form
      std::size_t look = pos_;
      while (look < text_.size() && name_char(text_[look])) ++look;
      std::size_t after = look;
      while (after < text_.size() && std::isspace(static_cast<unsigned char>(text_[after]))) {
        ++after;
      }
      const std::string_view word = text_.substr(pos_, look - pos_);
      if (after < text_.size() && text_[after] == '=' &&
          (word == "splits" || word == "batch_sizes" || word == "weights")) {
        const bool fits = (word == "splits" && node.kind == BlockKind::kSplit) ||
                          (word == "batch_sizes" && node.kind == BlockKind::kBatchSplit) ||
                          (word == "weights" && node.kind == BlockKind::kAverage);
        if (!fits) {
          fail("'" + std::string(word) + "' does not apply to " +
               std::string(block_name(node.kind)));
        }
        if (numbers_seen) fail("numeric arguments given twice");
        pos_ = after + 1;
        expect('[');
        set_numbers(node, parse_numbers(']'), item_start);
        expect(']');
        numbers_seen = true;
      } else if (accept('|')) {
        if (numbers_seen) fail("numeric arguments given twice");
        const std::size_t at = pos_;
        set_numbers(node, parse_numbers(')'), at);
        numbers_seen = true;
      } else {
        if (numbers_seen) fail("children must precede numeric arguments");
        node.children.push_back(parse_node());
      }
      if (accept(')')) break;
      skip_space();
      if (!numbers_seen && pos_ < text_.size() && text_[pos_] == '|') continue;
      if (numbers_seen) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ')') {
          ++pos_;
          break;
        }
      }
      expect(',');
    }
    return node;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool bare_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), name_char);
}

}  // namespace

CompositionNode parse_composition(std::string_view text) {
  return Parser(text).parse();
}

std::string to_string(const CompositionNode& node) {
  if (node.kind == BlockKind::kLeaf) {
    return bare_name(node.adapter) ? node.adapter : "\"" + node.adapter + "\"";
  }
  std::string out(block_name(node.kind));
  out += "(";
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    if (i > 0) out += ", ";
    out += to_string(node.children[i]);
  }
  std::vector<std::string> nums;
  for (auto s : node.sizes) nums.push_back(std::to_string(s));
  for (auto w : node.weights) nums.push_back(format_number(w));
  if (!nums.empty() || node.kind == BlockKind::kSplit || node.kind == BlockKind::kBatchSplit ||
      node.kind == BlockKind::kAverage) {
    if (!nums.empty()) {
      out += " |";
      for (std::size_t i = 0; i < nums.size(); ++i) out += (i == 0 ? " " : ", ") + nums[i];
    }
  }
  return out + ")";
}

std::vector<std::string> leaf_names(const CompositionNode& node) {
  std::vector<std::string> out;
  auto walk = [&](auto&& self, const CompositionNode& n) -> void {
    if (n.kind == BlockKind::kLeaf) {
      if (std::find(out.begin(), out.end(), n.adapter) == out.end()) out.push_back(n.adapter);
      return;
    }
    for (const auto& c : n.children) self(self, c);
  };
  walk(walk, node);
  return out;
}

std::string fusion_key(const std::vector<std::string>& members) {
  std::string key;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i > 0) key += ",";
    key += members[i];
  }
  return key;
}

// --------------------------------------------------------------- validation

namespace {

bool has_sequence_adapter(const CompositionNode& node, const AdapterRegistry& reg,
                          std::string* which) {
  for (const auto& name : leaf_names(node)) {
    const Adapter& a = reg.adapter(name);
    if (a.prompt_length() > 0 || a.prefix_length() > 0) {
      *which = name;
      return true;
    }
  }
  return false;
}

// Total prompt length rows see after passing `node`.
std::size_t prompt_length(const CompositionNode& node, const AdapterRegistry& reg) {
  switch (node.kind) {
    case BlockKind::kLeaf:
      return reg.adapter(node.adapter).prompt_length();
    case BlockKind::kStack: {
      std::size_t p = 0;
      for (const auto& c : node.children) p += prompt_length(c, reg);
      return p;
    }
    case BlockKind::kParallel:
    case BlockKind::kBatchSplit: {
      const std::size_t p = prompt_length(node.children.front(), reg);
      for (const auto& c : node.children) {
        if (prompt_length(c, reg) != p) {
          throw CompositionError(std::string(block_name(node.kind)) +
                                 ": every child must add the same prompt length (" +
                                 to_string(node) + ")");
        }
      }
      return p;
    }
    default:
      return 0;
  }
}

void check_structure(const CompositionNode& node, const AdapterRegistry& reg) {
  const std::string where = to_string(node);
  if (node.kind == BlockKind::kLeaf) {
    if (node.adapter.empty()) throw CompositionError("empty adapter name in composition");
    if (!reg.contains(node.adapter)) {
      throw LookupError("composition references unknown adapter '" + node.adapter + "'");
    }
    return;
  }
  if (node.children.empty()) {
    throw CompositionError(std::string(block_name(node.kind)) + " needs at least one child");
  }
  for (const auto& c : node.children) {
    if (!nesting_allowed(node.kind, c.kind)) {
      throw CompositionError(std::string(block_name(c.kind)) + " may not be nested inside " +
                             std::string(block_name(node.kind)) + " (" + where + ")");
    }
  }
  const bool sized = node.kind == BlockKind::kSplit || node.kind == BlockKind::kBatchSplit;
  if (sized) {
    if (node.sizes.size() != node.children.size()) {
      throw ArithmeticError(std::string(block_name(node.kind)) + " has " +
                            std::to_string(node.children.size()) + " children but " +
                            std::to_string(node.sizes.size()) + " sizes (" + where + ")");
    }
    for (auto s : node.sizes) {
      if (s == 0) throw ArithmeticError("sizes must be positive (" + where + ")");
    }
  } else if (!node.sizes.empty()) {
    throw CompositionError(std::string(block_name(node.kind)) + " takes no sizes");
  }
  if (node.kind == BlockKind::kAverage) {
    if (node.weights.size() != node.children.size()) {
      throw ArithmeticError("Average has " + std::to_string(node.children.size()) +
                            " children but " + std::to_string(node.weights.size()) +
                            " weights (" + where + ")");
    }
    double total = 0;
    for (double w : node.weights) {
      if (!(w >= 0) || !std::isfinite(w)) {
        throw ArithmeticError("Average weights must be finite and non-negative (" + where + ")");
      }
      total += w;
    }
    if (total <= 0) throw ArithmeticError("Average weights sum to zero (" + where + ")");
  } else if (!node.weights.empty()) {
    throw CompositionError(std::string(block_name(node.kind)) + " takes no weights");
  }
  for (const auto& c : node.children) check_structure(c, reg);

  if (node.kind == BlockKind::kSplit || node.kind == BlockKind::kAverage ||
      node.kind == BlockKind::kFuse) {
    std::string which;
    if (has_sequence_adapter(node, reg, &which)) {
      throw CompositionError("adapter '" + which + "' changes the sequence length and cannot be "
                             "used inside " + std::string(block_name(node.kind)));
    }
  }
  if (node.kind == BlockKind::kAverage) {
    for (const auto& name : leaf_names(node)) {
      if (reg.adapter(name).has_hook(HookPoint::kEmbeddingBoundary)) {
        throw CompositionError("adapter '" + name + "' has an invertible layer, which has no "
                               "inverse once outputs are averaged; it cannot be used inside "
                               "Average");
      }
    }
  }
  if (node.kind == BlockKind::kFuse) {
    const auto names = leaf_names(node);
    for (const auto& name : names) {
      if (!reg.adapter(name).is_pure_bottleneck()) {
        throw CompositionError("Fuse members must be bottleneck adapters; '" + name + "' is " +
                               method_name(reg.adapter(name).config()));
      }
    }
    if (!reg.has_fusion(fusion_key(names))) {
      throw StateError("Fuse(" + fusion_key(names) +
                       ") has no fusion layer; call add_adapter_fusion first");
    }
  }
}

void check_arithmetic(const CompositionNode& node, std::size_t samples, std::size_t seq) {
  switch (node.kind) {
    case BlockKind::kBatchSplit: {
      std::size_t total = 0;
      for (auto s : node.sizes) total += s;
      if (total != samples) {
        throw ArithmeticError("BatchSplit sizes sum to " + std::to_string(total) +
                              " but the batch has " + std::to_string(samples) + " rows (" +
                              to_string(node) + ")");
      }
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        check_arithmetic(node.children[i], node.sizes[i], seq);
      }
      return;
    }
    case BlockKind::kSplit: {
      std::size_t total = 0;
      for (auto s : node.sizes) total += s;
      if (total > seq) {
        throw ArithmeticError("Split sizes sum to " + std::to_string(total) +
                              " but the sequence has " + std::to_string(seq) + " positions (" +
                              to_string(node) + ")");
      }
      return;
    }
    default:
      for (const auto& c : node.children) check_arithmetic(c, samples, seq);
  }
}

}  // namespace

void validate_composition(const CompositionNode& node, const AdapterRegistry& registry,
                          std::optional<InputShape> input) {
  check_structure(node, registry);
  const std::size_t prompt = prompt_length(node, registry);
  if (input) check_arithmetic(node, input->batch, input->seq + prompt);
}

}  // namespace adapters
