// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace adapters {

/// Dimensions of the reference encoder.
struct ModelDims {
  std::size_t num_layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t intermediate = 128;
  std::size_t vocab = 1000;
  std::size_t max_seq = 128;

  /// Small encoder used for training and property tests.
  static ModelDims desk() { return {}; }

  /// roberta-base sized encoder (12 layers, 768 hidden, 12 heads, 3072 FFN).
  static ModelDims roberta_base() { return {12, 768, 12, 3072, 50265, 514}; }

  /// Accepts "desk", "roberta-base-dims", or "L=..,d=..,H=..,ff=..,V=..,max_seq=.."
  /// (missing keys keep desk values).
  static ModelDims parse(std::string_view spec);

  /// Throws ConfigError unless every extent is >= 1 and hidden % heads == 0.
  void validate() const;

  std::string to_string() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

}  // namespace adapters
