// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "catbert/tokenizer.hpp"

namespace catbert {

struct LimeOptions {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  double ridge = 1e-3;
  /// Proximity kernel width; default 0.75 * sqrt(#features).
  std::optional<double> kernel_width;
  std::size_t top_k = 5;
  std::size_t threads = 1;
};

/// Local linear surrogate over word-presence features.
struct Attribution {
  /// One entry per distinct content word, in first-occurrence order.
  std::vector<std::pair<std::string, double>> weights;
  double intercept = 0.0;
  double r2 = 0.0;
  double kernel_width = 0.0;
  std::size_t samples = 0;
  std::vector<std::string> top_positive;
  std::vector<std::string> top_negative;

  double weight(const std::string& word) const;
  nlohmann::json to_json() const;
};

using SequenceScorer = std::function<double(const TokenSequence&)>;

/// Content tokens are grouped into words (a piece plus its "##"
/// continuations); each distinct word is one feature. Every neighbour masks
/// each feature with probability one half by writing [UNK] over all of its
/// pieces, so positions never shift. The first neighbour is the unmasked
/// input. A ridge regression weighted by exp(-d^2 / width^2), d = number of
/// masked features, is fit to the scores. Throws ContractError when there
/// is no content or fewer than 50 samples are requested.
Attribution lime_explain(const TokenSequence& tokens, const Vocabulary& vocab, const SequenceScorer& score,
                         const LimeOptions& options = {});

/// Solves (A + ridge * I) x = b for symmetric positive definite A (n x n,
/// row-major) by Cholesky. Entries listed in `unpenalized` get no ridge.
std::vector<double> solve_ridge(std::vector<double> a, std::vector<double> b, std::size_t n, double ridge,
                                const std::vector<std::size_t>& unpenalized = {});

}  // namespace catbert
