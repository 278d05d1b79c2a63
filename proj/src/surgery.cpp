// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/surgery.hpp"

#include <charconv>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

namespace {

ModelConfig default_target(const ModelConfig& donor, std::size_t kept) {
  ModelConfig target = donor;
  target.plan.clear();
  for (std::size_t i = 0; i < kept; ++i) {
    target.plan.push_back(BlockKind::transformer);
    target.plan.push_back(BlockKind::adapter);
  }
  target.context_dim = ContextFeatures::kDim;
  target.readout = Readout::last_block;
  target.use_context = true;
  return target;
}

void require_same(const char* what, std::size_t donor, std::size_t target) {
  if (donor != target) {
    throw ConfigError(std::string("donor ") + what + " " + std::to_string(donor) + " != target " + what + " " +
                      std::to_string(target));
  }
}

}  // namespace

SurgeryResult surgery_from_donor(const CatBertModel& donor, const SurgeryOptions& options) {
  const ModelConfig& dc = donor.config();
  for (std::size_t k : options.keep) {
    if (k >= dc.plan.size()) {
      throw IndexError("keep index " + std::to_string(k) + " is outside the donor's " + std::to_string(dc.plan.size()) +
                       " blocks");
    }
    if (dc.plan[k] != BlockKind::transformer) throw ConfigError("donor block " + std::to_string(k) + " is an adapter");
  }
  ModelConfig target = options.target ? *options.target : default_target(dc, options.keep.size());
  target.seed = options.seed;
  target.validate();
  require_same("hidden size", dc.hidden, target.hidden);
  require_same("ffn size", dc.ffn, target.ffn);
  require_same("head count", dc.heads, target.heads);
  require_same("vocabulary size", dc.vocab_size, target.vocab_size);
  require_same("max positions", dc.max_positions, target.max_positions);
  require_same("transformer count (keep list vs target plan)", options.keep.size(), target.num_transformers());

  SurgeryResult out{CatBertModel(target, options.seed), {}};
  for (const auto& p : out.model.parameters()) out.provenance[p.name] = {false, ""};

  auto copy = [&](const std::string& to, const std::string& from) {
    Parameter<float>& dst = out.model.at(to);
    const Parameter<float>& src = donor.at(from);
    if (dst.value.shape() != src.value.shape()) {
      throw ConfigError("shape mismatch copying '" + from + "' to '" + to + "'");
    }
    dst.value = src.value;
    out.provenance[to] = {true, from};
  };

  for (const auto& p : donor.parameters()) {
    if (p.name.starts_with("embeddings.")) copy(p.name, p.name);
  }
  std::size_t slot = 0;
  for (std::size_t i = 0; i < target.plan.size(); ++i) {
    if (target.plan[i] != BlockKind::transformer) continue;
    const std::string from = block_prefix(options.keep[slot++]) + ".";
    const std::string to = block_prefix(i) + ".";
    for (const auto& p : donor.parameters()) {
      if (p.name.starts_with(from)) copy(to + p.name.substr(from.size()), p.name);
    }
  }
  if (options.zero_adapter_output) {
    for (auto& p : out.model.parameters()) {
      if (p.name.find(".adapter.dense2.") != std::string::npos) p.value.fill(0.0f);
    }
  }
  return out;
}

std::vector<std::size_t> parse_index_list(std::string_view text) {
  std::vector<std::size_t> out;
  for (const auto& part : split(text, ',')) {
    const std::string t = trim(part);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw ConfigError("'" + std::string(text) + "' is not a comma-separated list of indices");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace catbert
