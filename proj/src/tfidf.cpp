// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/tfidf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "catbert/autograd.hpp"
#include "catbert/error.hpp"
#include "catbert/tokenizer.hpp"

namespace catbert {

using nlohmann::json;

std::vector<std::string> word_ngrams(std::string_view text, std::size_t min_n, std::size_t max_n) {
  std::vector<std::string> words;
  for (auto& w : basic_tokenize(text)) {
    const bool punct = w.size() == 1 && std::ispunct(static_cast<unsigned char>(w[0]));
    if (!punct) words.push_back(std::move(w));
  }
  std::vector<std::string> out;
  for (std::size_t n = std::max<std::size_t>(1, min_n); n <= max_n; ++n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string gram = words[i];
      for (std::size_t k = 1; k < n; ++k) gram += ' ' + words[i + k];
      out.push_back(std::move(gram));
    }
  }
  return out;
}

SparseRow TfidfLogisticRegression::features(std::string_view document) const {
  std::map<std::size_t, double> counts;
  for (const auto& g : word_ngrams(document, config_.min_n, config_.max_n)) {
    const auto it = index_.find(g);
    if (it != index_.end()) counts[it->second] += 1.0;
  }
  SparseRow row;
  double norm = 0.0;
  for (const auto& [i, c] : counts) {
    const double v = c * idf_[i];
    row.emplace_back(i, v);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& [i, v] : row) v /= norm;
  }
  return row;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double dot(const SparseRow& row, const std::vector<double>& coef) {
  double z = 0.0;
  for (const auto& [i, v] : row) z += coef[i] * v;
  return z;
}

}  // namespace

TfidfLogisticRegression TfidfLogisticRegression::fit(std::span<const std::string> documents, std::span<const int> labels,
                                                     std::span<const double> weights, const TfidfConfig& config) {
  if (documents.empty()) throw DatasetError("cannot fit TF-IDF model on an empty dataset");
  if (documents.size() != labels.size() || documents.size() != weights.size()) {
    throw DatasetError("documents, labels and weights differ in length");
  }
  if (config.min_n < 1 || config.max_n < config.min_n) throw ConfigError("invalid n-gram range");
  TfidfLogisticRegression m;
  m.config_ = config;

  // Document frequencies, with terms indexed in first-seen order for determinism.
  std::vector<std::size_t> df;
  for (const auto& doc : documents) {
    auto grams = word_ngrams(doc, config.min_n, config.max_n);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) {
      auto [it, inserted] = m.index_.try_emplace(g, m.terms_.size());
      if (inserted) {
        m.terms_.push_back(g);
        df.push_back(0);
      }
      ++df[it->second];
    }
  }
  const double n = static_cast<double>(documents.size());
  m.idf_.resize(df.size());
  for (std::size_t i = 0; i < df.size(); ++i) m.idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;

  std::vector<SparseRow> rows;
  rows.reserve(documents.size());
  for (const auto& doc : documents) rows.push_back(m.features(doc));

  std::vector<double> w(weights.begin(), weights.end());
  if (config.balance_classes) {
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) (labels[i] == 1 ? pos : neg) += w[i];
    if (pos > 0.0 && neg > 0.0) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 0.5 * (pos + neg) / (labels[i] == 1 ? pos : neg);
    }
  }

  m.coef_.assign(m.terms_.size(), 0.0);
  std::vector<double> grad(m.coef_.size());
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double f = std::clamp(sigmoid(dot(rows[i], m.coef_) + m.bias_), kProbClamp, 1.0 - kProbClamp);
      const double r = w[i] * (f - labels[i]) / n;
      for (const auto& [j, v] : rows[i]) grad[j] += r * v;
      grad_bias += r;
    }
    for (std::size_t j = 0; j < m.coef_.size(); ++j) m.coef_[j] -= config.learning_rate * (grad[j] + config.l2 * m.coef_[j]);
    m.bias_ -= config.learning_rate * grad_bias;
  }
  return m;
}

double TfidfLogisticRegression::predict(std::string_view document) const {
  return sigmoid(dot(features(document), coef_) + bias_);
}

double TfidfLogisticRegression::idf(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  return it == index_.end() ? 0.0 : idf_[it->second];
}

json TfidfLogisticRegression::to_json() const {
  return json{{"min_n", config_.min_n}, {"max_n", config_.max_n}, {"terms", terms_},
              {"idf", idf_},            {"coef", coef_},          {"bias", bias_}};
}

TfidfLogisticRegression TfidfLogisticRegression::from_json(const json& j) {
  TfidfLogisticRegression m;
  try {
    m.config_.min_n = j.at("min_n").get<std::size_t>();
    m.config_.max_n = j.at("max_n").get<std::size_t>();
    m.terms_ = j.at("terms").get<std::vector<std::string>>();
    m.idf_ = j.at("idf").get<std::vector<double>>();
    m.coef_ = j.at("coef").get<std::vector<double>>();
    m.bias_ = j.at("bias").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("TF-IDF model: ") + e.what());
  }
  if (m.idf_.size() != m.terms_.size() || m.coef_.size() != m.terms_.size()) {
    throw ConfigError("TF-IDF model: terms, idf and coef differ in length");
  }
  for (std::size_t i = 0; i < m.terms_.size(); ++i) m.index_.emplace(m.terms_[i], i);
  return m;
}

}  // namespace catbert
