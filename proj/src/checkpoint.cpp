// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include "catbert/error.hpp"

namespace catbert {

using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4);

void put_f32(std::vector<char>& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  std::memcpy(out.data() + start, values.data(), values.size() * 4);
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = start; i < out.size(); i += 4) {
      std::swap(out[i], out[i + 3]);
      std::swap(out[i + 1], out[i + 2]);
    }
  }
}

void get_f32(const char* bytes, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), bytes, values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const char swapped[4] = {bytes[4 * i + 3], bytes[4 * i + 2], bytes[4 * i + 1], bytes[4 * i]};
      std::memcpy(&values[i], swapped, 4);
    }
  }
}

json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const CatBertModel& model, const Provenance& provenance,
                     const json& extra) {
  std::filesystem::create_directories(dir);
  std::vector<char> blob;
  json tensors = json::array();
  for (const auto& p : model.parameters()) {
    json entry = {{"name", p.name},
                  {"shape", p.value.shape()},
                  {"dtype", "f32"},
                  {"file", kTensorFile},
                  {"offset", blob.size()},
                  {"bytes", p.value.size() * 4},
                  {"trainable", p.trainable}};
    if (const auto it = provenance.find(p.name); it != provenance.end()) {
      entry["source"] = it->second.copied ? json{{"kind", "copied"}, {"donor_name", it->second.donor_name}}
                                           : json{{"kind", "fresh"}};
    }
    tensors.push_back(std::move(entry));
    put_f32(blob, p.value.data());
  }
  json manifest = {{"format", "catbert-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"config", config_to_json(model.config())},
                   {"tensors", std::move(tensors)},
                   {"extra", extra}};

  const auto blob_path = dir / kTensorFile;
  std::ofstream bin(blob_path, std::ios::binary | std::ios::trunc);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw CheckpointError("write failed for " + blob_path.string());
  const auto manifest_path = dir / kManifestFile;
  std::ofstream out(manifest_path, std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw CheckpointError("write failed for " + manifest_path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_manifest(dir);
  if (manifest.value("format", "") != "catbert-checkpoint") {
    throw CheckpointError(dir.string() + ": not a catbert checkpoint");
  }
  const int version = manifest.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }

  // Index the directory and check it against the layout before touching the blob.
  std::map<std::string, const json*> entries;
  for (const auto& e : manifest.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    if (!entries.emplace(name, &e).second) throw CheckpointError("tensor '" + name + "' listed twice");
  }
  const auto layout = parameter_layout(config);
  std::set<std::string> expected;
  for (const auto& [name, shape] : layout) {
    expected.insert(name);
    const auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointError("missing tensor '" + name + "'");
    const json& e = *it->second;
    const Shape stored = e.at("shape").get<Shape>();
    if (stored != shape) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_to_string(stored) + " but the config needs " +
                            shape_to_string(shape));
    }
    if (e.value("dtype", "") != "f32") throw CheckpointError("tensor '" + name + "' has unsupported dtype");
    if (e.value("bytes", std::size_t{0}) != shape_numel(shape) * 4) {
      throw CheckpointError("tensor '" + name + "' byte count does not match its shape");
    }
  }
  for (const auto& [name, entry] : entries) {
    if (!expected.count(name)) throw CheckpointError("unexpected tensor '" + name + "'");
  }

  std::map<std::string, std::vector<char>> files;
  std::vector<Parameter<float>> params;
  Provenance provenance;
  for (const auto& [name, shape] : layout) {
    const json& e = *entries.at(name);
    const std::string file = e.value("file", std::string(kTensorFile));
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
      throw CheckpointError("tensor '" + name + "' points outside the checkpoint directory");
    }
    auto [it, inserted] = files.try_emplace(file);
    if (inserted) {
      std::ifstream in(dir / file, std::ios::binary);
      if (!in) throw CheckpointError("cannot open " + (dir / file).string());
      it->second.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    const std::vector<char>& bytes = it->second;
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t count = shape_numel(shape);
    if (offset > bytes.size() || bytes.size() - offset < count * 4) {
      throw CheckpointError("tensor '" + name + "' is truncated in " + file);
    }
    Tensor<float> value(shape);
    get_f32(bytes.data() + offset, value.data());
    params.push_back({name, std::move(value), e.value("trainable", true), {}});
    if (const auto src = e.find("source"); src != e.end()) {
      const bool copied = src->value("kind", "") == "copied";
      provenance[name] = {copied, copied ? src->value("donor_name", "") : ""};
    }
  }
  Checkpoint out{CatBertModel(config, std::move(params)), std::move(provenance), manifest.value("extra", json::object())};
  return out;
}

}  // namespace catbert
