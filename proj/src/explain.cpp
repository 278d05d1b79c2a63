// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/explain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

using nlohmann::json;

double Attribution::weight(const std::string& word) const {
  for (const auto& [w, v] : weights) {
    if (w == word) return v;
  }
  return 0.0;
}

json Attribution::to_json() const {
  json ws = json::array();
  for (const auto& [w, v] : weights) ws.push_back({{"token", w}, {"weight", v}});
  return json{{"weights", ws},           {"intercept", intercept},       {"r2", r2},
              {"kernel_width", kernel_width}, {"samples", samples},      {"top_positive", top_positive},
              {"top_negative", top_negative}};
}

std::vector<double> solve_ridge(std::vector<double> a, std::vector<double> b, std::size_t n, double ridge,
                                const std::vector<std::size_t>& unpenalized) {
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(unpenalized.begin(), unpenalized.end(), i) == unpenalized.end()) a[i * n + i] += ridge;
  }
  // In-place Cholesky: lower triangle of a becomes L with A = L L^T.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw ContractError("ridge system is not positive definite");
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return b;
}

Attribution lime_explain(const TokenSequence& tokens, const Vocabulary& vocab, const SequenceScorer& score,
                         const LimeOptions& options) {
  if (options.samples < 50) throw ContractError("LIME needs at least 50 samples, got " + std::to_string(options.samples));

  // Group content positions into words, then words into distinct features.
  std::vector<std::string> words;
  std::map<std::string, std::size_t> feature_of;
  std::vector<std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    if (!tokens.attention_mask.empty() && tokens.attention_mask[i] == 0) continue;
    const std::int32_t id = tokens.ids[i];
    if (id == vocab.cls_id() || id == vocab.sep_id() || id == vocab.pad_id()) continue;
    const std::string& piece = vocab.token(id);
    const bool continuation = piece.starts_with(kContinuationPrefix);
    if (continuation && !positions.empty() && !words.empty()) {
      // Extend the word started by the previous piece; it is re-keyed below.
      words.back() += piece.substr(kContinuationPrefix.size());
      positions.back().push_back(i);
      continue;
    }
    words.push_back(piece);
    positions.push_back({i});
  }
  if (words.empty()) throw ContractError("nothing to explain: the sequence has no content tokens");

  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> feature_positions;
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto [it, inserted] = feature_of.try_emplace(words[w], names.size());
    if (inserted) {
      names.push_back(words[w]);
      feature_positions.emplace_back();
    }
    auto& fp = feature_positions[it->second];
    fp.insert(fp.end(), positions[w].begin(), positions[w].end());
  }
  const std::size_t m = names.size();
  const std::size_t n = options.samples;
  const double width = options.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(m)));

  std::mt19937_64 rng(options.seed);
  std::bernoulli_distribution keep(0.5);
  std::vector<std::uint8_t> present(n * m, 1);
  for (std::size_t s = 1; s < n; ++s) {
    for (std::size_t f = 0; f < m; ++f) present[s * m + f] = keep(rng) ? 1 : 0;
  }
  std::vector<double> y(n);
  parallel_for(n, options.threads, [&](std::size_t s) {
    TokenSequence t = tokens;
    for (std::size_t f = 0; f < m; ++f) {
      if (!present[s * m + f]) {
        for (std::size_t p : feature_positions[f]) t.ids[p] = vocab.unk_id();
      }
    }
    y[s] = score(t);
  });

  // Weighted ridge with an unpenalized intercept in column 0.
  const std::size_t k = m + 1;
  std::vector<double> ata(k * k, 0.0), atb(k, 0.0), kernel(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double masked = static_cast<double>(m - std::accumulate(present.begin() + static_cast<std::ptrdiff_t>(s * m),
                                                                  present.begin() + static_cast<std::ptrdiff_t>((s + 1) * m), 0));
    const double w = std::exp(-(masked * masked) / (width * width));
    kernel[s] = w;
    std::vector<double> row(k);
    row[0] = 1.0;
    for (std::size_t f = 0; f < m; ++f) row[f + 1] = present[s * m + f];
    for (std::size_t i = 0; i < k; ++i) {
      if (row[i] == 0.0) continue;
      atb[i] += w * row[i] * y[s];
      for (std::size_t j = 0; j < k; ++j) ata[i * k + j] += w * row[i] * row[j];
    }
  }
  const auto beta = solve_ridge(std::move(ata), std::move(atb), k, options.ridge, {0});

  Attribution out;
  out.intercept = beta[0];
  out.kernel_width = width;
  out.samples = n;
  for (std::size_t f = 0; f < m; ++f) out.weights.emplace_back(names[f], beta[f + 1]);

  double wsum = 0.0, ymean = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    wsum += kernel[s];
    ymean += kernel[s] * y[s];
  }
  ymean /= wsum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double pred = beta[0];
    for (std::size_t f = 0; f < m; ++f) pred += beta[f + 1] * present[s * m + f];
    ss_res += kernel[s] * (y[s] - pred) * (y[s] - pred);
    ss_tot += kernel[s] * (y[s] - ymean) * (y[s] - ymean);
  }
  out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return beta[a + 1] > beta[b + 1]; });
  for (std::size_t i = 0; i < m && out.top_positive.size() < options.top_k; ++i) {
    if (beta[order[i] + 1] > 0.0) out.top_positive.push_back(names[order[i]]);
  }
  for (std::size_t i = m; i-- > 0 && out.top_negative.size() < options.top_k;) {
    if (beta[order[i] + 1] < 0.0) out.top_negative.push_back(names[order[i]]);
  }
  return out;
}

}  // namespace catbert
