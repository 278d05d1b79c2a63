// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "catbert/error.hpp"

namespace catbert {

using nlohmann::json;

std::size_t ScoreSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoreSet::negatives() const { return labels.size() - positives(); }

void ScoreSet::validate() const {
  if (scores.size() != labels.size()) {
    throw DimensionError(std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  }
  if (!groups.empty() && groups.size() != labels.size()) {
    throw DimensionError(std::to_string(groups.size()) + " group tags but " + std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("label " + std::to_string(y) + " is not 0 or 1");
  }
}

namespace {

void require_both_classes(const ScoreSet& s) {
  s.validate();
  if (s.positives() == 0 || s.negatives() == 0) {
    throw ContractError("metric needs both classes (positives=" + std::to_string(s.positives()) +
                        ", negatives=" + std::to_string(s.negatives()) + ")");
  }
}

// Indices ordered by descending score.
std::vector<std::size_t> descending(const ScoreSet& s) {
  std::vector<std::size_t> idx(s.scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(const ScoreSet& s) {
  require_both_classes(s);
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    // Ranks i+1 .. j share their mean, (i + 1 + j) / 2.
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[idx[k]] == 1) rank_sum += mid;
    }
    i = j;
  }
  const double p = static_cast<double>(s.positives());
  const double q = static_cast<double>(s.negatives());
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

std::vector<RocPoint> roc_curve(const ScoreSet& s) {
  require_both_classes(s);
  const double p = static_cast<double>(s.positives());
  const double q = static_cast<double>(s.negatives());
  const auto idx = descending(s);
  std::vector<RocPoint> curve = {{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double t = s.scores[idx[i]];
    while (i < idx.size() && s.scores[idx[i]] == t) {
      (s.labels[idx[i]] == 1 ? tp : fp)++;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / q, static_cast<double>(tp) / p, t});
  }
  return curve;
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> curve) {
  out << "fpr,tpr,threshold\n";
  out << std::setprecision(17);
  for (const auto& pt : curve) out << pt.fpr << ',' << pt.tpr << ',' << pt.threshold << '\n';
}

std::vector<double> tpr_at_fpr(const ScoreSet& s, std::span<const double> fprs) {
  const auto curve = roc_curve(s);
  std::vector<double> out;
  out.reserve(fprs.size());
  for (double target : fprs) {
    // FPR and TPR are both non-decreasing along the curve, so the last
    // admissible point has the largest FPR and, among those, the largest TPR.
    double best = 0.0;
    for (const auto& pt : curve) {
      if (pt.fpr <= target) best = pt.tpr;
    }
    out.push_back(best);
  }
  return out;
}

double threshold_at_fpr(const ScoreSet& s, double fpr) {
  s.validate();
  if (s.negatives() == 0) throw ContractError("threshold_at_fpr: no negatives to measure a false positive rate");
  std::vector<double> neg;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] == 0) neg.push_back(s.scores[i]);
  }
  std::sort(neg.begin(), neg.end(), std::greater<>());
  // Skip whole tie groups of negatives while the flagged share stays
  // admissible; neg[i] is then the highest negative that must stay unflagged.
  const double q = static_cast<double>(neg.size());
  std::size_t i = 0;
  while (i < neg.size()) {
    std::size_t j = i;
    while (j < neg.size() && neg[j] == neg[i]) ++j;
    if (static_cast<double>(j) / q > fpr) break;
    i = j;
  }
  if (i == neg.size()) return *std::min_element(s.scores.begin(), s.scores.end());
  // The lowest curve threshold above that negative, as roc_curve places them.
  double best = std::numeric_limits<double>::infinity();
  for (double v : s.scores) {
    if (v > neg[i]) best = std::min(best, v);
  }
  return best;
}

GroupReport group_metrics(const ScoreSet& s, std::span<const double> fprs) {
  s.validate();
  GroupReport report;
  if (s.groups.empty()) return report;
  static const std::vector<std::string> known = {"bec", "english", "non_english"};
  auto canonical = [](const std::string& tag) {
    if (tag.empty()) return std::string();
    return std::find(known.begin(), known.end(), tag) != known.end() ? tag : std::string("other");
  };
  std::map<std::string, std::vector<std::size_t>> positives_by_group;
  std::vector<std::size_t> negatives;
  std::map<std::string, bool> seen;
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    const std::string g = canonical(s.groups[i]);
    if (!g.empty()) seen[g] = true;
    if (s.labels[i] == 0) {
      negatives.push_back(i);
    } else if (!g.empty()) {
      positives_by_group[g].push_back(i);
    }
  }
  for (const auto& [group, unused] : seen) {
    const auto it = positives_by_group.find(group);
    if (it == positives_by_group.end()) {
      report.warnings.push_back("group '" + group + "' has no positives; omitted");
      continue;
    }
    if (negatives.empty()) {
      report.warnings.push_back("no negatives to score group '" + group + "' against; omitted");
      continue;
    }
    ScoreSet sub;
    for (std::size_t i : it->second) {
      sub.scores.push_back(s.scores[i]);
      sub.labels.push_back(1);
    }
    for (std::size_t i : negatives) {
      sub.scores.push_back(s.scores[i]);
      sub.labels.push_back(0);
    }
    report.groups.push_back({group, it->second.size(), negatives.size(), roc_auc(sub), tpr_at_fpr(sub, fprs)});
  }
  return report;
}

RunSummary summarize_runs(std::span<const double> values) {
  RunSummary r;
  r.runs = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

std::string fpr_key(double fpr) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << fpr;
  std::string s = os.str();
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

json metrics_to_json(const ScoreSet& s, std::span<const double> fprs) {
  json out;
  out["auc"] = roc_auc(s);
  out["positives"] = s.positives();
  out["negatives"] = s.negatives();
  json table = json::object();
  const auto tprs = tpr_at_fpr(s, fprs);
  for (std::size_t i = 0; i < fprs.size(); ++i) table[fpr_key(fprs[i])] = tprs[i];
  out["tpr_at_fpr"] = table;
  json groups = json::object();
  const auto report = group_metrics(s, fprs);
  for (const auto& g : report.groups) {
    json gt = json::object();
    for (std::size_t i = 0; i < fprs.size(); ++i) gt[fpr_key(fprs[i])] = g.tpr[i];
    groups[g.group] = {{"auc", g.auc}, {"positives", g.positives}, {"negatives", g.negatives}, {"tpr_at_fpr", gt}};
  }
  out["groups"] = groups;
  out["warnings"] = report.warnings;
  return out;
}

double accuracy(const ScoreSet& s, double threshold) {
  s.validate();
  if (s.labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    if ((s.scores[i] >= threshold ? 1 : 0) == s.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(s.labels.size());
}

}  // namespace catbert
