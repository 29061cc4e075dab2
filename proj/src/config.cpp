// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/config.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include "adapters/errors.hpp"

namespace adapters {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

// ---------------------------------------------------------------- presets

AdapterConfig mam_preset() {
  PrefixTuningConfig prefix;
  prefix.bottleneck_size = 800;
  BottleneckConfig par;
  par.placement = Placement::kParallel;
  par.reduction_factor = 2;
  par.scaling = 4.0;
  return UnionConfig{{prefix, par}, false};
}

AdapterConfig unipelt_preset() {
  LoraConfig lora;
  lora.alpha = 2.0;
  PrefixTuningConfig prefix;
  prefix.prefix_length = 10;
  BottleneckConfig seq;
  return UnionConfig{{lora, prefix, seq}, true};
}

std::optional<AdapterConfig> preset(std::string_view name) {
  BottleneckConfig bn;
  if (name == "seq_bn") return bn;
  if (name == "double_seq_bn") {
    bn.placement = Placement::kDouble;
    return bn;
  }
  if (name == "par_bn") {
    bn.placement = Placement::kParallel;
    bn.reduction_factor = 2;
    bn.scaling = 4.0;
    return bn;
  }
  if (name == "seq_bn_inv" || name == "double_seq_bn_inv" || name == "par_bn_inv") {
    AdapterConfig base = *preset(name.substr(0, name.size() - 4));
    auto cfg = base.as<BottleneckConfig>();
    cfg.with_invertible = true;
    return cfg;
  }
  if (name == "prompt_tuning") return PromptTuningConfig{};
  if (name == "prefix_tuning") return PrefixTuningConfig{};
  if (name == "compacter") return CompacterConfig{};
  if (name == "lora") return LoraConfig{};
  if (name == "ia3") return Ia3Config{};
  if (name == "mam") return mam_preset();
  if (name == "unipelt") return unipelt_preset();
  return std::nullopt;
}

// ---------------------------------------------------------------- overrides

std::size_t parse_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("option '" + std::string(key) + "' expects a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("option '" + std::string(key) + "' expects a number, got '" +
                      std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("option '" + std::string(key) + "' expects true/false, got '" +
                    std::string(v) + "'");
}

[[noreturn]] void unknown_option(std::string_view method, std::string_view key,
                                 std::string_view valid) {
  throw ConfigError("unknown option '" + std::string(key) + "' for " + std::string(method) +
                    " (valid: " + std::string(valid) + ")");
}

void apply_option(std::string_view method, AdapterConfig& cfg, std::string_view key,
                  std::string_view val) {
  std::visit(
      [&](auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          if (key == "reduction_factor") {
            c.reduction_factor = parse_count(key, val);
          } else if (key == "nonlinearity") {
            c.nonlinearity = parse_activation(val);
          } else if (key == "scaling") {
            c.scaling = parse_real(key, val);
          } else if (key == "inv_reduction_factor") {
            c.inv_reduction_factor = parse_count(key, val);
          } else {
            unknown_option(method, key, "reduction_factor, nonlinearity, scaling, "
                                        "inv_reduction_factor");
          }
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          if (key == "prompt_length") {
            c.prompt_length = parse_count(key, val);
          } else {
            unknown_option(method, key, "prompt_length");
          }
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          if (key == "prefix_length") {
            c.prefix_length = parse_count(key, val);
          } else if (key == "bottleneck_size") {
            c.bottleneck_size = parse_count(key, val);
          } else if (key == "flat") {
            c.flat = parse_bool(key, val);
          } else {
            unknown_option(method, key, "prefix_length, bottleneck_size, flat");
          }
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          if (key == "reduction_factor") {
            c.reduction_factor = parse_count(key, val);
          } else if (key == "phm_dim") {
            c.phm_dim = parse_count(key, val);
          } else if (key == "factor_rank") {
            c.factor_rank = parse_count(key, val);
          } else if (key == "shared_phm_rule") {
            c.share_a_globally = parse_bool(key, val);
          } else if (key == "nonlinearity") {
            c.nonlinearity = parse_activation(val);
          } else {
            unknown_option(method, key,
                           "reduction_factor, phm_dim, factor_rank, shared_phm_rule, nonlinearity");
          }
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          if (key == "r") {
            c.r = parse_count(key, val);
          } else if (key == "alpha") {
            c.alpha = parse_real(key, val);
          } else if (key == "targets") {
            if (val.empty() || val.find_first_not_of("qv") != std::string_view::npos) {
              throw ConfigError("lora targets must be a combination of 'q' and 'v', got '" +
                                std::string(val) + "'");
            }
            c.target_query = val.find('q') != std::string_view::npos;
            c.target_value = val.find('v') != std::string_view::npos;
          } else {
            unknown_option(method, key, "r, alpha, targets");
          }
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          if (key == "keys") {
            c.keys = parse_bool(key, val);
          } else if (key == "values") {
            c.values = parse_bool(key, val);
          } else if (key == "intermediate") {
            c.intermediate = parse_bool(key, val);
          } else {
            unknown_option(method, key, "keys, values, intermediate");
          }
        } else {
          throw ConfigError(std::string(method) + " takes no options; compose members with '+'");
        }
      },
      cfg.method);
}

AdapterConfig parse_single(std::string_view spec) {
  spec = trim(spec);
  if (spec.empty()) throw ConfigError("empty adapter config");
  const auto open = spec.find('[');
  const std::string_view name = trim(spec.substr(0, open));
  std::optional<AdapterConfig> cfg = preset(name);
  if (!cfg) {
    throw ConfigError("unknown adapter config '" + std::string(name) +
                      "' (valid: " + join(config_names(), ", ") + ")");
  }
  if (open == std::string_view::npos) return *cfg;
  if (spec.back() != ']') throw ConfigError("config '" + std::string(spec) + "': missing ']'");
  std::string_view body = spec.substr(open + 1, spec.size() - open - 2);
  std::set<std::string, std::less<>> seen;
  while (!trim(body).empty()) {
    const auto comma = body.find(',');
    const std::string_view item = trim(body.substr(0, comma));
    body = comma == std::string_view::npos ? std::string_view{} : body.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config option '" + std::string(item) + "' must be key=value");
    }
    const std::string_view key = trim(item.substr(0, eq));
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("config option '" + std::string(key) + "' given twice");
    }
    apply_option(name, *cfg, key, trim(item.substr(eq + 1)));
  }
  return *cfg;
}

// Splits on '+' outside brackets and parentheses.
std::vector<std::string_view> split_union(std::string_view spec) {
  std::vector<std::string_view> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const char c = spec[i];
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == '+' && depth == 0) {
      parts.push_back(spec.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(spec.substr(start));
  return parts;
}

std::string placement_name(Placement p) {
  switch (p) {
    case Placement::kSequential: return "sequential";
    case Placement::kParallel: return "parallel";
    case Placement::kDouble: return "double";
  }
  return "?";
}

Placement parse_placement(std::string_view s) {
  if (s == "sequential") return Placement::kSequential;
  if (s == "parallel") return Placement::kParallel;
  if (s == "double") return Placement::kDouble;
  throw ConfigError("unknown placement '" + std::string(s) + "'");
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::string_view activation_name(Activation f) {
  switch (f) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(std::string_view text) {
  for (Activation f : {Activation::kIdentity, Activation::kRelu, Activation::kGelu,
                       Activation::kTanh, Activation::kSigmoid}) {
    if (activation_name(f) == text) return f;
  }
  throw ConfigError("unknown nonlinearity '" + std::string(text) +
                    "' (valid: identity, relu, gelu, tanh, sigmoid)");
}

std::vector<std::string> config_names() {
  return {"seq_bn",        "double_seq_bn", "par_bn",    "seq_bn_inv", "double_seq_bn_inv",
          "par_bn_inv",    "prompt_tuning", "prefix_tuning", "compacter", "lora",
          "ia3",           "mam",           "unipelt"};
}

AdapterConfig parse_config(std::string_view spec) {
  spec = trim(spec);
  if (spec.empty()) throw ConfigError("empty adapter config");
  bool gated = false;
  if (spec.starts_with("gated(")) {
    if (spec.back() != ')') throw ConfigError("gated(...): missing ')'");
    spec = spec.substr(6, spec.size() - 7);
    gated = true;
  }
  const auto parts = split_union(spec);
  if (parts.size() == 1 && !gated) return parse_single(parts.front());
  UnionConfig u;
  u.gated = gated;
  for (std::string_view part : parts) {
    AdapterConfig member = parse_single(part);
    if (member.is<UnionConfig>()) {
      throw ConfigError("unions cannot be nested ('" + std::string(trim(part)) + "')");
    }
    u.members.push_back(std::move(member));
  }
  return u;
}

std::string method_name(const AdapterConfig& config) {
  return std::visit(
      [&](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          std::string base = c.placement == Placement::kSequential ? "seq_bn"
                             : c.placement == Placement::kDouble   ? "double_seq_bn"
                                                                   : "par_bn";
          return c.with_invertible ? base + "_inv" : base;
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          return "prompt_tuning";
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          return "prefix_tuning";
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          return "compacter";
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          return "lora";
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          return "ia3";
        } else {
          if (config == mam_preset()) return "mam";
          if (config == unipelt_preset()) return "unipelt";
          return "union";
        }
      },
      config.method);
}

std::string config_to_string(const AdapterConfig& config) {
  return std::visit(
      [&](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        const std::string name = method_name(config);
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          std::string s = name + "[reduction_factor=" + std::to_string(c.reduction_factor) +
                          ",nonlinearity=" + std::string(activation_name(c.nonlinearity)) +
                          ",scaling=" + format_number(c.scaling);
          if (c.with_invertible) {
            s += ",inv_reduction_factor=" + std::to_string(c.inv_reduction_factor);
          }
          return s + "]";
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          return name + "[prompt_length=" + std::to_string(c.prompt_length) + "]";
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          return name + "[prefix_length=" + std::to_string(c.prefix_length) +
                 ",bottleneck_size=" + std::to_string(c.bottleneck_size) +
                 ",flat=" + (c.flat ? "true" : "false") + "]";
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          return name + "[reduction_factor=" + std::to_string(c.reduction_factor) +
                 ",phm_dim=" + std::to_string(c.phm_dim) +
                 ",factor_rank=" + std::to_string(c.factor_rank) +
                 ",shared_phm_rule=" + (c.share_a_globally ? "true" : "false") +
                 ",nonlinearity=" + std::string(activation_name(c.nonlinearity)) + "]";
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          std::string targets = std::string(c.target_query ? "q" : "") + (c.target_value ? "v" : "");
          return name + "[r=" + std::to_string(c.r) + ",alpha=" + format_number(c.alpha) +
                 ",targets=" + targets + "]";
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          return name + "[keys=" + (c.keys ? "true" : "false") +
                 ",values=" + (c.values ? "true" : "false") +
                 ",intermediate=" + (c.intermediate ? "true" : "false") + "]";
        } else {
          std::vector<std::string> parts;
          for (const auto& m : c.members) parts.push_back(config_to_string(m));
          const std::string body = join(parts, "+");
          return c.gated ? "gated(" + body + ")" : body;
        }
      },
      config.method);
}

nlohmann::json config_to_json(const AdapterConfig& config) {
  using nlohmann::json;
  return std::visit(
      [&](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          return {{"type", "bottleneck"},
                  {"placement", placement_name(c.placement)},
                  {"reduction_factor", c.reduction_factor},
                  {"nonlinearity", activation_name(c.nonlinearity)},
                  {"with_invertible", c.with_invertible},
                  {"inv_reduction_factor", c.inv_reduction_factor},
                  {"scaling", c.scaling}};
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          return {{"type", "prompt_tuning"}, {"prompt_length", c.prompt_length}};
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          return {{"type", "prefix_tuning"},
                  {"prefix_length", c.prefix_length},
                  {"bottleneck_size", c.bottleneck_size},
                  {"flat", c.flat}};
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          return {{"type", "compacter"},
                  {"reduction_factor", c.reduction_factor},
                  {"phm_dim", c.phm_dim},
                  {"factor_rank", c.factor_rank},
                  {"shared_phm_rule", c.share_a_globally},
                  {"nonlinearity", activation_name(c.nonlinearity)}};
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          return {{"type", "lora"},
                  {"r", c.r},
                  {"alpha", c.alpha},
                  {"target_query", c.target_query},
                  {"target_value", c.target_value}};
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          return {{"type", "ia3"},
                  {"keys", c.keys},
                  {"values", c.values},
                  {"intermediate", c.intermediate}};
        } else {
          json members = json::array();
          for (const auto& m : c.members) members.push_back(config_to_json(m));
          return {{"type", "union"}, {"gated", c.gated}, {"members", members}};
        }
      },
      config.method);
}

AdapterConfig config_from_json(const nlohmann::json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "bottleneck") {
      BottleneckConfig c;
      c.placement = parse_placement(j.at("placement").get<std::string>());
      c.reduction_factor = j.at("reduction_factor").get<std::size_t>();
      c.nonlinearity = parse_activation(j.at("nonlinearity").get<std::string>());
      c.with_invertible = j.at("with_invertible").get<bool>();
      c.inv_reduction_factor = j.at("inv_reduction_factor").get<std::size_t>();
      c.scaling = j.at("scaling").get<double>();
      return c;
    }
    if (type == "prompt_tuning") {
      return PromptTuningConfig{j.at("prompt_length").get<std::size_t>()};
    }
    if (type == "prefix_tuning") {
      return PrefixTuningConfig{j.at("prefix_length").get<std::size_t>(),
                                j.at("bottleneck_size").get<std::size_t>(),
                                j.at("flat").get<bool>()};
    }
    if (type == "compacter") {
      CompacterConfig c;
      c.reduction_factor = j.at("reduction_factor").get<std::size_t>();
      c.phm_dim = j.at("phm_dim").get<std::size_t>();
      c.factor_rank = j.at("factor_rank").get<std::size_t>();
      c.share_a_globally = j.at("shared_phm_rule").get<bool>();
      c.nonlinearity = parse_activation(j.at("nonlinearity").get<std::string>());
      return c;
    }
    if (type == "lora") {
      return LoraConfig{j.at("r").get<std::size_t>(), j.at("alpha").get<double>(),
                        j.at("target_query").get<bool>(), j.at("target_value").get<bool>()};
    }
    if (type == "ia3") {
      return Ia3Config{j.at("keys").get<bool>(), j.at("values").get<bool>(),
                       j.at("intermediate").get<bool>()};
    }
    if (type == "union") {
      UnionConfig u;
      u.gated = j.at("gated").get<bool>();
      for (const auto& m : j.at("members")) u.members.push_back(config_from_json(m));
      return u;
    }
    throw ConfigError("unknown config type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config descriptor: ") + e.what());
  }
}

void validate_config(const AdapterConfig& config, const ModelDims& dims) {
  const std::size_t d = dims.hidden;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        const std::string name = method_name(config);
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          require(c.reduction_factor >= 1 && d % c.reduction_factor == 0,
                  name + ": reduction_factor " + std::to_string(c.reduction_factor) +
                      " must divide hidden size " + std::to_string(d));
          require(std::isfinite(c.scaling), name + ": scaling must be finite");
          if (c.with_invertible) {
            require(d % 2 == 0, name + ": invertible adapter needs an even hidden size");
            require(c.inv_reduction_factor >= 1 && (d / 2) % c.inv_reduction_factor == 0,
                    name + ": inv_reduction_factor must divide hidden/2");
          }
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          require(c.prompt_length >= 1, name + ": prompt_length must be >= 1");
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          require(c.prefix_length >= 1, name + ": prefix_length must be >= 1");
          require(c.flat || c.bottleneck_size >= 1, name + ": bottleneck_size must be >= 1");
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          require(c.reduction_factor >= 1 && d % c.reduction_factor == 0,
                  name + ": reduction_factor " + std::to_string(c.reduction_factor) +
                      " must divide hidden size " + std::to_string(d));
          const std::size_t b = d / c.reduction_factor;
          require(c.phm_dim >= 1 && d % c.phm_dim == 0 && b % c.phm_dim == 0,
                  name + ": phm_dim " + std::to_string(c.phm_dim) +
                      " must divide hidden size " + std::to_string(d) +
                      " and bottleneck width " + std::to_string(b));
          require(c.factor_rank >= 1, name + ": factor_rank must be >= 1");
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          require(c.r >= 1, name + ": r must be >= 1");
          require(c.alpha > 0 && std::isfinite(c.alpha), name + ": alpha must be positive");
          require(c.target_query || c.target_value, name + ": needs at least one target");
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          require(c.keys || c.values || c.intermediate, name + ": needs at least one target");
        } else {
          require(!c.members.empty(), "union needs at least one member");
          std::map<HookPoint, std::string> owners;
          for (const auto& m : c.members) {
            require(!m.template is<UnionConfig>(), "unions cannot be nested");
            validate_config(m, dims);
            if (c.gated) {
              const bool ungateable =
                  m.template is<PromptTuningConfig>() ||
                  (m.template is<BottleneckConfig>() && m.template as<BottleneckConfig>().with_invertible);
              require(!ungateable, "gated unions cannot contain " + method_name(m) +
                                       " (no per-layer output to gate)");
              continue;
            }
            for (HookPoint h : config_hooks(m)) {
              auto [it, fresh] = owners.emplace(h, method_name(m));
              require(fresh, "union members " + it->second + " and " + method_name(m) +
                                 " both target " + std::string(hook_name(h)) +
                                 "; ungated unions need disjoint hook points");
            }
          }
        }
      },
      config.method);
}

std::vector<HookPoint> config_hooks(const AdapterConfig& config) {
  std::set<HookPoint> hooks;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          if (c.placement == Placement::kParallel) hooks.insert(HookPoint::kParallelToLayer);
          if (c.placement == Placement::kDouble) hooks.insert(HookPoint::kPostAttnResidual);
          if (c.placement != Placement::kParallel) hooks.insert(HookPoint::kPostFfnResidual);
          if (c.with_invertible) hooks.insert(HookPoint::kEmbeddingBoundary);
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          hooks.insert(HookPoint::kInputPrepend);
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          hooks.insert(HookPoint::kAttnKV);
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          hooks.insert(HookPoint::kPostAttnResidual);
          hooks.insert(HookPoint::kPostFfnResidual);
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          if (c.target_query) hooks.insert(HookPoint::kAttnQProj);
          if (c.target_value) hooks.insert(HookPoint::kAttnVProj);
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          if (c.keys) hooks.insert(HookPoint::kAttnKeysScale);
          if (c.values) hooks.insert(HookPoint::kAttnValuesScale);
          if (c.intermediate) hooks.insert(HookPoint::kFfnIntermediateScale);
        } else {
          for (const auto& m : c.members) {
            for (HookPoint h : config_hooks(m)) hooks.insert(h);
          }
        }
      },
      config.method);
  return {hooks.begin(), hooks.end()};
}

std::size_t count_params(const AdapterConfig& config, const ModelDims& dims) {
  validate_config(config, dims);
  const std::size_t L = dims.num_layers;
  const std::size_t d = dims.hidden;
  return std::visit(
      [&](const auto& c) -> std::size_t {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BottleneckConfig>) {
          const std::size_t b = d / c.reduction_factor;
          const std::size_t module = 2 * d * b + b + d;
          const std::size_t per_layer = c.placement == Placement::kDouble ? 2 : 1;
          std::size_t total = per_layer * L * module;
          if (c.with_invertible) {
            const std::size_t h = d / 2;
            const std::size_t w = h / c.inv_reduction_factor;
            total += 2 * (2 * h * w + w + h);
          }
          return total;
        } else if constexpr (std::is_same_v<T, PromptTuningConfig>) {
          return c.prompt_length * d;
        } else if constexpr (std::is_same_v<T, PrefixTuningConfig>) {
          if (L == 0) return 0;
          const std::size_t p = c.prefix_length;
          if (c.flat) return 2 * L * p * d;
          const std::size_t b = c.bottleneck_size;
          return p * d + (d * b + b) + (b * 2 * L * d + 2 * L * d);
        } else if constexpr (std::is_same_v<T, CompacterConfig>) {
          if (L == 0) return 0;
          const std::size_t b = d / c.reduction_factor;
          const std::size_t n = c.phm_dim;
          const std::size_t rule = n * n * n;
          auto phm = [&](std::size_t in, std::size_t out) {
            return c.factor_rank * (in + out) + out + (c.share_a_globally ? 0 : rule);
          };
          const std::size_t module = phm(d, b) + phm(b, d);
          return 2 * L * module + (c.share_a_globally ? rule : 0);
        } else if constexpr (std::is_same_v<T, LoraConfig>) {
          const std::size_t targets = (c.target_query ? 1 : 0) + (c.target_value ? 1 : 0);
          return targets * L * (d * c.r + c.r * d);
        } else if constexpr (std::is_same_v<T, Ia3Config>) {
          return L * ((c.keys ? d : 0) + (c.values ? d : 0) +
                      (c.intermediate ? dims.intermediate : 0));
        } else {
          std::size_t total = 0;
          for (const auto& m : c.members) total += count_params(m, dims);
          if (c.gated) total += c.members.size() * L * d;
          return total;
        }
      },
      config.method);
}

}  // namespace adapters
