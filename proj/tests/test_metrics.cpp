#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "catbert/error.hpp"
#include "catbert/metrics.hpp"

using namespace catbert;

namespace {

ScoreSet make(std::vector<double> pos, std::vector<double> neg) {
  ScoreSet s;
  for (double v : pos) {
    s.scores.push_back(v);
    s.labels.push_back(1);
  }
  for (double v : neg) {
    s.scores.push_back(v);
    s.labels.push_back(0);
  }
  return s;
}

// Scores drawn from a few levels so ties are common.
ScoreSet random_set(std::mt19937_64& rng, std::size_t n, bool ties) {
  ScoreSet s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng() % 2);
    double v = u(rng) + 0.3 * y;
    if (ties) v = std::round(v * 8) / 8;
    s.scores.push_back(v);
    s.labels.push_back(y);
  }
  s.labels[0] = 0;
  s.labels[1] = 1;
  return s;
}

double pairwise_auc(const ScoreSet& s) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] != 1) continue;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j] != 0) continue;
      pairs += 1;
      if (s.scores[i] > s.scores[j]) wins += 1;
      if (s.scores[i] == s.scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Every threshold t in {+inf} U scores, flagging score >= t.
double sweep_tpr(const ScoreSet& s, double target) {
  std::vector<double> cuts = s.scores;
  cuts.push_back(std::numeric_limits<double>::infinity());
  double best_fpr = -1, best_tpr = 0;
  for (double t : cuts) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.scores[i] >= t) (s.labels[i] ? tp : fp) += 1;
    }
    const double fpr = fp / static_cast<double>(s.negatives());
    const double tpr = tp / static_cast<double>(s.positives());
    if (fpr <= target && (fpr > best_fpr || (fpr == best_fpr && tpr > best_tpr))) {
      best_fpr = fpr;
      best_tpr = tpr;
    }
  }
  return best_tpr;
}

}  // namespace

TEST_SUITE("auc") {
  TEST_CASE("auc examples") {
    CHECK(roc_auc(make({0.9}, {0.1})) == 1.0);
    CHECK(roc_auc(make({0.1}, {0.9})) == 0.0);
    CHECK(roc_auc(make({0.5, 0.5}, {0.5, 0.5, 0.5})) == 0.5);
    CHECK_THROWS_AS(roc_auc(make({0.1, 0.2}, {})), ContractError);
    CHECK_THROWS_AS(roc_auc(make({}, {0.3})), ContractError);
  }

  TEST_CASE("auc equals the pairwise count") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      const auto s = random_set(rng, 200, seed % 2 == 0);
      CHECK(std::abs(roc_auc(s) - pairwise_auc(s)) <= 1e-12);
    }
  }

  TEST_CASE("auc ignores strictly monotone transforms") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      const auto s = random_set(rng, 80, seed % 2 == 0);
      auto t = s;
      for (auto& v : t.scores) v = std::exp(3 * v) - 7;
      CHECK(roc_auc(t) == roc_auc(s));
    }
  }

  TEST_CASE("validation errors") {
    ScoreSet s = make({0.2}, {0.1});
    s.labels.push_back(1);
    CHECK_THROWS_AS(s.validate(), DimensionError);
    s = make({0.2}, {0.1});
    s.labels[0] = 2;
    CHECK_THROWS_AS(s.validate(), ContractError);
  }
}

TEST_SUITE("roc") {
  TEST_CASE("tpr at fpr examples") {
    const auto s = make({0.9, 0.8}, {0.3, 0.2, 0.1});
    const std::vector<double> targets = {0.34, 0.0, 1.0};
    CHECK(tpr_at_fpr(s, targets) == std::vector<double>{1.0, 1.0, 1.0});
    const auto hard = make({0.9, 0.25}, {0.3, 0.2, 0.1});
    const std::vector<double> t2 = {0.0, 0.34, 0.67};
    CHECK(tpr_at_fpr(hard, t2) == std::vector<double>{0.5, 1.0, 1.0});
  }

  TEST_CASE("tpr at fpr matches an exhaustive sweep") {
    const std::vector<double> targets = {0.0, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.33, 0.5, 0.9, 1.0};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed + 1000);
      const auto s = random_set(rng, 5 + rng() % 150, seed % 2 == 0);
      const auto got = tpr_at_fpr(s, targets);
      for (std::size_t k = 0; k < targets.size(); ++k) {
        CAPTURE(targets[k]);
        CHECK(got[k] == sweep_tpr(s, targets[k]));
        if (k) CHECK(got[k] >= got[k - 1]);
      }
    }
  }

  TEST_CASE("curve endpoints and monotonicity") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      const auto s = random_set(rng, 2 + rng() % 60, seed % 3 == 0);
      const auto c = roc_curve(s);
      REQUIRE(c.size() >= 2);
      CHECK(c.front().fpr == 0.0);
      CHECK(c.front().tpr == 0.0);
      CHECK(c.back().fpr == 1.0);
      CHECK(c.back().tpr == 1.0);
      for (std::size_t i = 1; i < c.size(); ++i) {
        CHECK(c[i].fpr >= c[i - 1].fpr);
        CHECK(c[i].tpr >= c[i - 1].tpr);
        CHECK(c[i].threshold < c[i - 1].threshold);
      }
    }
  }

  TEST_CASE("threshold for a target fpr") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed + 7);
      const auto s = random_set(rng, 5 + rng() % 100, seed % 2 == 0);
      for (double target : {0.0, 0.01, 0.1, 0.25, 1.0}) {
        const double t = threshold_at_fpr(s, target);
        double fp = 0, tp = 0;
        for (std::size_t i = 0; i < s.scores.size(); ++i) {
          if (s.scores[i] >= t) (s.labels[i] ? tp : fp) += 1;
        }
        CHECK(fp / static_cast<double>(s.negatives()) <= target);
        CHECK(tp / static_cast<double>(s.positives()) == sweep_tpr(s, target));
      }
    }
    CHECK_THROWS_AS(threshold_at_fpr(make({0.5}, {}), 0.1), ContractError);
  }

  TEST_CASE("roc csv") {
    std::ostringstream os;
    const auto c = roc_curve(make({0.9}, {0.1}));
    write_roc_csv(os, c);
    const std::string text = os.str();
    CHECK(text.rfind("fpr,tpr,threshold\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(c.size() + 1));
  }
}

TEST_SUITE("groups") {
  TEST_CASE("a single group equals the global metrics") {
    std::mt19937_64 rng(3);
    auto s = random_set(rng, 100, false);
    s.groups.assign(s.scores.size(), "english");
    const auto r = group_metrics(s, kDefaultFprs);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].auc == roc_auc(s));
    CHECK(r.groups[0].tpr == tpr_at_fpr(s, kDefaultFprs));
  }

  TEST_CASE("group without positives is omitted with a warning") {
    auto s = make({0.9, 0.8}, {0.1, 0.2});
    s.groups = {"bec", "bec", "non_english", "english"};
    const auto r = group_metrics(s, kDefaultFprs);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].group == "bec");
    CHECK(r.groups[0].negatives == 2);
    CHECK_FALSE(r.warnings.empty());
  }

  TEST_CASE("separable and random groups") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScoreSet s;
    for (int i = 0; i < 2000; ++i) {
      s.scores.push_back(u(rng));
      s.labels.push_back(0);
      s.groups.push_back(i % 2 ? "bec" : "english");
    }
    for (int i = 0; i < 500; ++i) {
      s.scores.push_back(1.0 + u(rng));
      s.labels.push_back(1);
      s.groups.push_back("bec");
      s.scores.push_back(u(rng));
      s.labels.push_back(1);
      s.groups.push_back("english");
    }
    const auto r = group_metrics(s, kDefaultFprs);
    REQUIRE(r.groups.size() == 2);
    for (const auto& g : r.groups) {
      if (g.group == "bec") CHECK(g.auc == 1.0);
      if (g.group == "english") CHECK(std::abs(g.auc - 0.5) <= 0.1);
    }
  }

  TEST_CASE("unknown tags become other") {
    auto s = make({0.9}, {0.1});
    s.groups = {"spam", "x"};
    const auto r = group_metrics(s, kDefaultFprs);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].group == "other");
  }
}

TEST_SUITE("aggregation") {
  TEST_CASE("mean and sample standard deviation") {
    const std::vector<double> v = {0.9, 0.95, 0.97, 0.91, 0.99};
    const auto r = summarize_runs(v);
    const double mean = (0.9 + 0.95 + 0.97 + 0.91 + 0.99) / 5;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(r.mean == mean);
    CHECK(r.stddev == std::sqrt(ss / 4));
    CHECK(r.runs == 5);
    CHECK(summarize_runs(std::vector<double>{0.7}).stddev == 0.0);
  }

  TEST_CASE("metrics json layout") {
    auto s = make({0.9, 0.4}, {0.1, 0.5});
    s.groups = {"bec", "english", "english", "bec"};
    const auto j = metrics_to_json(s, kDefaultFprs);
    CHECK(j["auc"].get<double>() == 0.75);
    CHECK(j["tpr_at_fpr"].contains(fpr_key(1e-4)));
    CHECK(j["groups"].contains("bec"));
  }

  TEST_CASE("accuracy at a threshold") {
    const auto s = make({0.9, 0.4}, {0.1, 0.5});
    CHECK(accuracy(s, 0.5) == 0.5);
    CHECK(accuracy(s, 0.45) == 0.5);
    CHECK(accuracy(s, 0.95) == 0.5);
    CHECK(accuracy(s, 0.3) == 0.75);
  }
}
