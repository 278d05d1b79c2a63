// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace catbert {

struct TfidfConfig {
  std::size_t min_n = 1;
  std::size_t max_n = 2;
  std::size_t iterations = 300;
  double learning_rate = 2.0;
  double l2 = 0.0;
  /// Rescale sample weights so both classes carry equal total weight.
  bool balance_classes = true;
};

/// Sparse row: (feature index, value), sorted by index.
using SparseRow = std::vector<std::pair<std::size_t, double>>;

/// Lowercased word n-grams (punctuation dropped), joined by single spaces.
std::vector<std::string> word_ngrams(std::string_view text, std::size_t min_n, std::size_t max_n);

/// TF-IDF features (raw counts times ln((1 + N) / (1 + df)) + 1, rows
/// L2-normalized) feeding a logistic regression fit by full-batch gradient
/// descent on weighted binary cross-entropy.
class TfidfLogisticRegression {
 public:
  /// Throws DatasetError on an empty corpus or mismatched lengths.
  static TfidfLogisticRegression fit(std::span<const std::string> documents, std::span<const int> labels,
                                     std::span<const double> weights, const TfidfConfig& config = {});

  /// n-grams never seen in training contribute nothing.
  SparseRow features(std::string_view document) const;
  double predict(std::string_view document) const;

  std::size_t vocabulary_size() const { return idf_.size(); }
  double idf(std::string_view term) const;
  double bias() const { return bias_; }

  nlohmann::json to_json() const;
  static TfidfLogisticRegression from_json(const nlohmann::json& j);

 private:
  TfidfConfig config_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::vector<double> coef_;
  double bias_ = 0.0;
};

}  // namespace catbert
