// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "adapters/errors.hpp"
#include "json.hpp"

namespace adapters {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'A', 'D', 'P', 'T'};

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const fs::path& file) : bytes_(bytes), file_(file) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(file_.string() + ": truncated weight file");
  }
  const std::string& bytes_;
  fs::path file_;
  std::size_t pos_ = 0;
};

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + file.string());
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string encode_weights(const NamedTensors& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint64_t>(out, name.size());
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.values()) put<float>(out, static_cast<float>(v));
  }
  return out;
}

json dims_json(const ModelDims& d) {
  return {{"num_layers", d.num_layers}, {"hidden", d.hidden}, {"heads", d.heads},
          {"intermediate", d.intermediate}, {"vocab", d.vocab}, {"max_seq", d.max_seq}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.num_layers = j.at("num_layers").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.heads = j.at("heads").get<std::size_t>();
  d.intermediate = j.at("intermediate").get<std::size_t>();
  d.vocab = j.at("vocab").get<std::size_t>();
  d.max_seq = j.at("max_seq").get<std::size_t>();
  return d;
}

json tensor_index(const NamedTensors& tensors) {
  json index = json::array();
  std::uint64_t offset = 16;  // magic + version + count
  for (const auto& [name, t] : tensors) {
    offset += 8 + name.size() + 4 + 8 * t.rank();
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += 4 * t.numel();
  }
  return index;
}

// Writes `weights` and returns the manifest fields describing them.
json write_blob(const fs::path& file, const NamedTensors& tensors) {
  const std::string bytes = encode_weights(tensors);
  write_file(file, bytes);
  return {{"weights", file.filename().string()},
          {"checksum", hex64(fnv1a(bytes))},
          {"tensors", tensor_index(tensors)}};
}

json read_manifest(const fs::path& file) {
  try {
    return json::parse(read_file(file));
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

void check_version(const json& manifest, const fs::path& file) {
  const auto version = manifest.value("format_version", 0u);
  if (version != kCheckpointVersion) {
    throw FormatError(file.string() + ": format version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
}

void check_dims(const ModelDims& stored, const ModelDims& model, const fs::path& dir) {
  if (stored != model) {
    throw ShapeError("checkpoint " + dir.string() + " was saved for dims " + stored.to_string() +
                     ", model has " + model.to_string());
  }
}

// Reads the blob a manifest points at, verifying its checksum.
NamedTensors read_blob(const fs::path& dir, const json& manifest) {
  const fs::path file = dir / manifest.at("weights").get<std::string>();
  const std::string bytes = read_file(file);
  if (hex64(fnv1a(bytes)) != manifest.at("checksum").get<std::string>()) {
    throw FormatError(file.string() + ": checksum mismatch");
  }
  return read_weights(file);
}

// Copies stored values into `target`, matching names and shapes in order.
void assign(const NamedTensors& target, const NamedTensors& stored, const fs::path& dir) {
  if (target.size() != stored.size()) {
    throw FormatError(dir.string() + ": checkpoint holds " + std::to_string(stored.size()) +
                      " tensors, expected " + std::to_string(target.size()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& [name, t] = target[i];
    const auto& [sname, s] = stored[i];
    if (name != sname || t.shape() != s.shape()) {
      throw FormatError(dir.string() + ": tensor " + std::to_string(i) + " is '" + sname + "' " +
                        shape_str(s.shape()) + ", expected '" + name + "' " +
                        shape_str(t.shape()));
    }
    Tensor dst = t;
    const Tensor& src = s;
    std::copy(src.values().begin(), src.values().end(), dst.values().begin());
  }
}

}  // namespace

void write_weights(const fs::path& file, const NamedTensors& tensors) {
  write_file(file, encode_weights(tensors));
}

NamedTensors read_weights(const fs::path& file) {
  const std::string bytes = read_file(file);
  Reader r(bytes, file);
  if (r.get_bytes(4) != std::string(kMagic, 4)) throw FormatError(file.string() + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(file.string() + ": weight format version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto count = r.get<std::uint64_t>();
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint64_t>();
    std::string name = r.get_bytes(len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint64_t>());
    Tensor t(shape);
    for (double& v : t.values()) v = r.get<float>();
    out.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError(file.string() + ": trailing bytes after last tensor");
  return out;
}

void save_adapter(const AdapterModel& model, const std::string& name, const fs::path& dir) {
  const Adapter& a = model.adapter(name);
  if (a.merged()) throw StateError("adapter '" + name + "' is merged; unmerge before saving");
  fs::create_directories(dir);
  json manifest = {{"format_version", kCheckpointVersion},
                   {"name", name},
                   {"method", method_name(a.config())},
                   {"config_string", config_to_string(a.config())},
                   {"config", config_to_json(a.config())},
                   {"dims", dims_json(a.dims())}};
  manifest.update(write_blob(dir / "weights.bin", a.parameters()));
  write_file(dir / "adapter_config.json", manifest.dump(2) + "\n");

  const fs::path head_manifest = dir / "head_config.json";
  if (model.registry().has_head(name)) {
    const PredictionHead& h = model.registry().head(name);
    json hj = {{"format_version", kCheckpointVersion},
               {"name", name},
               {"kind", std::string(head_kind_name(h.kind))},
               {"num_labels", h.num_labels},
               {"dims", dims_json(model.dims())}};
    hj.update(write_blob(dir / "head.bin", {{"weight", h.weight}, {"bias", h.bias}}));
    write_file(head_manifest, hj.dump(2) + "\n");
  } else {
    fs::remove(head_manifest);
    fs::remove(dir / "head.bin");
  }
}

std::string load_adapter(AdapterModel& model, const fs::path& dir,
                         const std::optional<std::string>& rename) {
  const fs::path mfile = dir / "adapter_config.json";
  const json manifest = read_manifest(mfile);
  check_version(manifest, mfile);
  NamedTensors stored;
  AdapterConfig config;
  std::string name;
  ModelDims dims;
  try {
    dims = dims_from_json(manifest.at("dims"));
    config = config_from_json(manifest.at("config"));
    name = rename.value_or(manifest.at("name").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(mfile.string() + ": " + e.what());
  }
  check_dims(dims, model.dims(), dir);
  stored = read_blob(dir, manifest);

  Rng rng(0);
  Adapter adapter(name, config, model.dims(), rng);
  assign(adapter.parameters(), stored, dir);

  std::optional<PredictionHead> head;
  const fs::path hfile = dir / "head_config.json";
  if (fs::exists(hfile)) {
    const json hj = read_manifest(hfile);
    check_version(hj, hfile);
    check_dims(dims_from_json(hj.at("dims")), model.dims(), dir);
    Rng hrng(0);
    head = PredictionHead::create(name, parse_head_kind(hj.at("kind").get<std::string>()),
                                  hj.at("num_labels").get<std::size_t>(), model.dims().hidden,
                                  hrng);
    assign({{"weight", head->weight}, {"bias", head->bias}}, read_blob(dir, hj), dir);
    if (model.registry().has_head(name)) {
      throw RegistryError("prediction head '" + name + "' already exists");
    }
  }
  model.add_adapter(std::move(adapter));
  if (head) model.add_prediction_head(std::move(*head));
  return name;
}

ModelDims adapter_checkpoint_dims(const fs::path& dir) {
  const fs::path mfile = dir / "adapter_config.json";
  const json manifest = read_manifest(mfile);
  try {
    return dims_from_json(manifest.at("dims"));
  } catch (const json::exception& e) {
    throw FormatError(mfile.string() + ": " + e.what());
  }
}

std::string adapter_checkpoint_name(const fs::path& dir) {
  const fs::path mfile = dir / "adapter_config.json";
  const json manifest = read_manifest(mfile);
  try {
    return manifest.at("name").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(mfile.string() + ": " + e.what());
  }
}

void save_base_model(const AdapterModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  NamedTensors tensors = model.encoder().named_parameters();
  json heads = json::array();
  for (const auto& [name, h] : model.registry().heads()) {
    heads.push_back({{"name", name},
                     {"kind", std::string(head_kind_name(h.kind))},
                     {"num_labels", h.num_labels}});
    tensors.emplace_back("heads." + name + ".weight", h.weight);
    tensors.emplace_back("heads." + name + ".bias", h.bias);
  }
  json manifest = {{"format_version", kCheckpointVersion},
                   {"seed", model.seed()},
                   {"dims", dims_json(model.dims())},
                   {"heads", heads}};
  manifest.update(write_blob(dir / "weights.bin", tensors));
  write_file(dir / "model_config.json", manifest.dump(2) + "\n");
}

AdapterModel load_base_model(const fs::path& dir) {
  const fs::path mfile = dir / "model_config.json";
  const json manifest = read_manifest(mfile);
  check_version(manifest, mfile);
  ModelDims dims;
  std::uint64_t seed = 0;
  std::vector<PredictionHead> heads;
  Rng rng(0);
  try {
    dims = dims_from_json(manifest.at("dims"));
    seed = manifest.at("seed").get<std::uint64_t>();
    dims.validate();
    for (const json& h : manifest.value("heads", json::array())) {
      heads.push_back(PredictionHead::create(
          h.at("name").get<std::string>(), parse_head_kind(h.at("kind").get<std::string>()),
          h.at("num_labels").get<std::size_t>(), dims.hidden, rng));
    }
  } catch (const json::exception& e) {
    throw FormatError(mfile.string() + ": " + e.what());
  }
  AdapterModel model(dims, seed);
  NamedTensors tensors = model.encoder().named_parameters();
  for (const PredictionHead& h : heads) {
    tensors.emplace_back("heads." + h.name + ".weight", h.weight);
    tensors.emplace_back("heads." + h.name + ".bias", h.bias);
  }
  assign(tensors, read_blob(dir, manifest), dir);
  for (PredictionHead& h : heads) model.add_prediction_head(std::move(h));
  return model;
}

std::vector<std::string> LocalHub::list() const {
  std::vector<std::string> out;
  if (!fs::exists(root_)) return out;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (fs::exists(entry.path() / "adapter_config.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void LocalHub::push(const AdapterModel& model, const std::string& name) const {
  save_adapter(model, name, path(name));
}

std::string LocalHub::pull(AdapterModel& model, const std::string& name,
                           const std::optional<std::string>& rename) const {
  if (!fs::exists(path(name) / "adapter_config.json")) {
    throw LookupError("hub " + root_.string() + " has no adapter '" + name + "'");
  }
  return load_adapter(model, path(name), rename);
}

}  // namespace adapters
