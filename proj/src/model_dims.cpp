// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/model_dims.hpp"

#include <charconv>
#include <sstream>

#include "adapters/errors.hpp"

namespace adapters {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

ModelDims ModelDims::parse(std::string_view spec) {
  spec = trim(spec);
  if (spec == "desk") return desk();
  if (spec == "roberta-base-dims" || spec == "roberta-base") return roberta_base();
  ModelDims dims = desk();
  while (!spec.empty()) {
    const auto comma = spec.find(',');
    std::string_view item = trim(spec.substr(0, comma));
    spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("dims: expected key=value, got '" + std::string(item) + "'");
    }
    const std::string_view key = trim(item.substr(0, eq));
    const std::string_view val = trim(item.substr(eq + 1));
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc() || ptr != val.data() + val.size()) {
      throw ConfigError("dims: bad integer '" + std::string(val) + "'");
    }
    if (key == "L" || key == "num_layers") {
      dims.num_layers = v;
    } else if (key == "d" || key == "hidden") {
      dims.hidden = v;
    } else if (key == "H" || key == "heads") {
      dims.heads = v;
    } else if (key == "ff" || key == "d_ff" || key == "intermediate") {
      dims.intermediate = v;
    } else if (key == "V" || key == "vocab") {
      dims.vocab = v;
    } else if (key == "max_seq") {
      dims.max_seq = v;
    } else {
      throw ConfigError("dims: unknown key '" + std::string(key) + "'");
    }
  }
  return dims;
}

void ModelDims::validate() const {
  if (num_layers == 0 || hidden == 0 || heads == 0 || intermediate == 0 || vocab == 0 ||
      max_seq == 0) {
    throw ConfigError("model dims must all be >= 1: " + to_string());
  }
  if (hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

std::string ModelDims::to_string() const {
  std::ostringstream os;
  os << "L=" << num_layers << ",d=" << hidden << ",H=" << heads << ",ff=" << intermediate
     << ",V=" << vocab << ",max_seq=" << max_seq;
  return os.str();
}

}  // namespace adapters
