// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "catbert/model.hpp"

namespace catbert {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTensorFile = "tensors.bin";

/// Where a tensor's initial value came from.
struct TensorSource {
  bool copied = false;
  std::string donor_name;  // set when copied

  bool operator==(const TensorSource&) const = default;
};

using Provenance = std::map<std::string, TensorSource>;

struct Checkpoint {
  CatBertModel model;
  Provenance provenance;  // empty if the checkpoint records none
  /// Free-form sections written by callers (tokenizer settings, surgery
  /// details, training summary).
  nlohmann::json extra = nlohmann::json::object();
};

/// Writes manifest.json and tensors.bin (little-endian f32, row-major, in
/// canonical parameter order). Overwrites existing files.
void save_checkpoint(const std::filesystem::path& dir, const CatBertModel& model, const Provenance& provenance = {},
                     const nlohmann::json& extra = nlohmann::json::object());

/// Validates the manifest against the config's layout before reading any
/// tensor data. Throws CheckpointError naming the offending tensor.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace catbert
