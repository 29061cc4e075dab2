// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "adapters/model.hpp"

namespace adapters {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes the weight blob: magic "ADPT", u32 version, u64 tensor count, then
/// per tensor a u64 name length, the name bytes, a u32 rank, u64 extents and
/// the float32 values. All integers little-endian.
void write_weights(const fs::path& file, const NamedTensors& tensors);
/// Reads a blob written by write_weights(). Throws FormatError on bad magic,
/// version or truncation.
NamedTensors read_weights(const fs::path& file);

// Adapter checkpoints: `dir/adapter_config.json` + `dir/weights.bin`, plus
// `head_config.json` + `head.bin` when a head of the same name exists.
void save_adapter(const AdapterModel& model, const std::string& name, const fs::path& dir);
/// Registers the adapter (and head) under its stored name or `rename`, and
/// returns that name. Throws ShapeError on a dims mismatch and FormatError
/// on version, checksum or tensor-index mismatches.
std::string load_adapter(AdapterModel& model, const fs::path& dir,
                         const std::optional<std::string>& rename = std::nullopt);

/// Dims and stored name recorded in an adapter checkpoint's manifest.
ModelDims adapter_checkpoint_dims(const fs::path& dir);
std::string adapter_checkpoint_name(const fs::path& dir);

// Base model checkpoints: `dir/model_config.json` + `dir/weights.bin`. The
// encoder weights travel with every registered prediction head; adapters do not.
void save_base_model(const AdapterModel& model, const fs::path& dir);
/// A model with the stored dims, seed, encoder weights and heads.
AdapterModel load_base_model(const fs::path& dir);

/// Directory-per-adapter local hub.
class LocalHub {
 public:
  explicit LocalHub(fs::path root) : root_(std::move(root)) {}
  const fs::path& root() const noexcept { return root_; }
  fs::path path(const std::string& name) const { return root_ / name; }
  std::vector<std::string> list() const;
  void push(const AdapterModel& model, const std::string& name) const;
  std::string pull(AdapterModel& model, const std::string& name,
                   const std::optional<std::string>& rename = std::nullopt) const;

 private:
  fs::path root_;
};

}  // namespace adapters
