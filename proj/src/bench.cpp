// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

std::vector<LatencyStats> time_inference(const CatBertModel& model, const BenchOptions& options) {
  const ModelConfig& c = model.config();
  if (options.seq_len < 1 || options.seq_len > c.max_positions) {
    throw ContractError("bench sequence length must be in [1, " + std::to_string(c.max_positions) + "]");
  }
  const std::size_t warmup = std::max<std::size_t>(3, options.warmup);
  std::vector<LatencyStats> out;
  for (std::size_t batch : options.batch_sizes) {
    if (batch == 0) throw ContractError("batch size must be positive");
    std::mt19937_64 rng(mix_seed(options.seed, batch));
    std::uniform_int_distribution<std::int32_t> id(0, static_cast<std::int32_t>(c.vocab_size - 1));
    std::vector<TokenSequence> inputs(batch);
    for (auto& s : inputs) {
      s.ids.resize(options.seq_len);
      for (auto& x : s.ids) x = id(rng);
      s.attention_mask.assign(options.seq_len, 1);
      s.original_length = options.seq_len;
    }
    const std::array<float, ContextFeatures::kDim> context = {0.0f, 1.0f, 0.7f, 0.0f};
    volatile float sink = 0.0f;
    auto run = [&] {
      for (const auto& s : inputs) sink = sink + model.predict(s, std::span<const float>(context));
    };
    for (std::size_t i = 0; i < warmup; ++i) run();
    std::vector<double> times;
    for (std::size_t r = 0; r < options.repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      run();
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    LatencyStats s;
    s.batch_size = batch;
    s.repetitions = times.size();
    if (!times.empty()) {
      s.mean_ms = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
      s.p50_ms = percentile(times, 0.5);
      s.p95_ms = percentile(times, 0.95);
      s.min_ms = *std::min_element(times.begin(), times.end());
    }
    out.push_back(s);
  }
  return out;
}

nlohmann::json latency_to_json(const LatencyStats& s) {
  return {{"batch_size", s.batch_size}, {"repetitions", s.repetitions}, {"mean_ms", s.mean_ms},
          {"p50_ms", s.p50_ms},         {"p95_ms", s.p95_ms},           {"min_ms", s.min_ms}};
}

}  // namespace catbert
