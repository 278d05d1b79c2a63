// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "catbert/checkpoint.hpp"
#include "catbert/model.hpp"

namespace catbert {

struct SurgeryOptions {
  /// Donor block indices to keep, in order. Each must name a transformer.
  std::vector<std::size_t> keep = {0, 2, 4};
  /// Target layout. When unset: the donor's dimensions with plan
  /// T,A repeated once per kept block and a context-fusing head.
  std::optional<ModelConfig> target;
  /// Seed for the freshly initialized adapters and classifier.
  std::uint64_t seed = 0;
  /// Zero each adapter's second dense unit so the adapters start as
  /// identity maps.
  bool zero_adapter_output = false;
};

struct SurgeryResult {
  CatBertModel model;
  Provenance provenance;
};

/// Copies the donor's embeddings and the kept transformer blocks into the
/// target's transformer slots (k-th kept block -> k-th transformer in the
/// plan); everything else is initialized fresh. Throws IndexError for a
/// keep index outside the donor, ConfigError for incompatible shapes.
SurgeryResult surgery_from_donor(const CatBertModel& donor, const SurgeryOptions& options);

/// "0,2,4" -> {0, 2, 4}
std::vector<std::size_t> parse_index_list(std::string_view text);

}  // namespace catbert
