// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "catbert/model.hpp"

namespace catbert {

struct BenchOptions {
  std::vector<std::size_t> batch_sizes = {1};
  std::size_t repetitions = 10;
  std::size_t warmup = 3;
  /// Tokens per sequence (no padding).
  std::size_t seq_len = 128;
  std::uint64_t seed = 0;
};

struct LatencyStats {
  std::size_t batch_size = 0;
  std::size_t repetitions = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double min_ms = 0.0;
};

/// Wall-clock time of predict() over a batch of random full-length
/// sequences, one thread. Warm-up runs (at least 3) are not recorded.
std::vector<LatencyStats> time_inference(const CatBertModel& model, const BenchOptions& options);

/// Nearest-rank percentile of unsorted samples, q in [0, 1].
double percentile(std::vector<double> samples, double q);

nlohmann::json latency_to_json(const LatencyStats& s);

}  // namespace catbert
