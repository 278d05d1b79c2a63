// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace catbert {

/// Paired scores and 0/1 labels, optionally tagged with a group each.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::string> groups;  // empty, or one tag per score

  std::size_t positives() const;
  std::size_t negatives() const;
  /// Throws DimensionError on length mismatch, ContractError on a label
  /// outside {0,1}.
  void validate() const;
};

inline const std::vector<double> kDefaultFprs = {1e-4, 1e-3, 1e-2, 1e-1};

/// Mann-Whitney AUC from mid-ranks; ties count one half. Throws
/// ContractError unless both classes are present.
double roc_auc(const ScoreSet& s);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // score >= threshold predicts positive
};

/// One point per distinct score from (0,0) at +inf to (1,1).
std::vector<RocPoint> roc_curve(const ScoreSet& s);
void write_roc_csv(std::ostream& out, std::span<const RocPoint> curve);

/// TPR at the threshold whose FPR is the largest achievable value not
/// above each target.
std::vector<double> tpr_at_fpr(const ScoreSet& s, std::span<const double> fprs);

/// Threshold of the ROC point tpr_at_fpr picks for `fpr`: scores at or
/// above it are flagged. Needs negatives; positives are optional.
double threshold_at_fpr(const ScoreSet& s, double fpr);

struct GroupMetrics {
  std::string group;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double auc = 0.0;
  std::vector<double> tpr;
};

struct GroupReport {
  std::vector<GroupMetrics> groups;
  std::vector<std::string> warnings;
};

/// Tags outside bec/english/non_english are reported as "other". Each
/// group's positives are scored against the whole negative pool. Groups
/// without positives are omitted with a warning.
GroupReport group_metrics(const ScoreSet& s, std::span<const double> fprs);

struct RunSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
};

RunSummary summarize_runs(std::span<const double> values);

/// {"auc", "tpr_at_fpr": {"0.0001": ...}, "groups": {...}}
nlohmann::json metrics_to_json(const ScoreSet& s, std::span<const double> fprs);
std::string fpr_key(double fpr);

/// Share of predictions (score >= threshold) matching the label.
double accuracy(const ScoreSet& s, double threshold);

}  // namespace catbert
