#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "catbert/error.hpp"
#include "catbert/explain.hpp"

using namespace catbert;

namespace {

Vocabulary words_vocab() {
  return Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "pay", "the", "invoice", "now", "please",
                                  "team", "lunch", "report", "wire", "##transfer", "today", "send", "money", "agenda",
                                  "review", "draft", "budget", "call", "notes", "plan"});
}

std::size_t count_id(const TokenSequence& t, std::optional<std::int32_t> id) {
  REQUIRE(id.has_value());
  return static_cast<std::size_t>(std::count(t.ids.begin(), t.ids.end(), *id));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Average ranks, ties sharing the mean rank.
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j - 1);
    i = j;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_SUITE("lime") {
  TEST_CASE("the paying word gets the top weight") {
    const auto v = words_vocab();
    const auto t = encode_text("please pay the invoice now team", v, 32).trimmed();
    const auto pay = v.find("pay");
    const auto a = lime_explain(t, v, [&](const TokenSequence& s) {
      return sigmoid(2.0 * static_cast<double>(count_id(s, pay)) - 1.0);
    });
    REQUIRE_FALSE(a.top_positive.empty());
    CHECK(a.top_positive.front() == "pay");
    CHECK(a.weight("pay") > 0.3);
    for (const auto& [w, x] : a.weights) {
      if (w != "pay") CHECK(std::abs(x) < 0.05);
    }
    CHECK(a.samples == 1000);
  }

  TEST_CASE("constant model gives zero weights") {
    const auto v = words_vocab();
    const auto t = encode_text("send money today please", v, 32).trimmed();
    const auto a = lime_explain(t, v, [](const TokenSequence&) { return 0.37; });
    for (const auto& [w, x] : a.weights) CHECK(std::abs(x) < 1e-9);
    CHECK(a.intercept == doctest::Approx(0.37).epsilon(1e-9));
  }

  TEST_CASE("split words are one feature") {
    const auto v = words_vocab();
    const auto t = encode_text("wiretransfer now", v, 32).trimmed();
    const auto wire = v.find("wire");
    const auto a = lime_explain(t, v, [&](const TokenSequence& s) { return static_cast<double>(count_id(s, wire)); });
    REQUIRE(a.weights.size() == 2);
    CHECK(a.weights[0].first == "wiretransfer");
    CHECK(a.weight("wiretransfer") == doctest::Approx(1.0).epsilon(1e-2));
  }

  TEST_CASE("linear oracles are ranked correctly") {
    const auto v = words_vocab();
    const std::vector<std::string> pool = {"pay", "the", "invoice", "now", "please", "team", "lunch", "report",
                                           "today", "send", "money", "agenda", "review", "draft", "budget", "call"};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<std::string> chosen = pool;
      std::shuffle(chosen.begin(), chosen.end(), rng);
      chosen.resize(8 + rng() % 8);
      std::string text;
      for (const auto& w : chosen) text += w + " ";
      const auto t = encode_text(text, v, 64).trimmed();
      std::normal_distribution<double> n(0.0, 1.0);
      std::vector<double> coef(chosen.size());
      for (auto& c : coef) c = n(rng);
      auto score = [&](const TokenSequence& s) {
        double y = 0.2;
        for (std::size_t k = 0; k < chosen.size(); ++k) y += coef[k] * static_cast<double>(count_id(s, v.find(chosen[k])));
        return y;
      };
      LimeOptions o;
      o.seed = seed;
      const auto a = lime_explain(t, v, score, o);
      std::vector<double> got;
      for (const auto& w : chosen) got.push_back(a.weight(w));
      CAPTURE(seed);
      CHECK(spearman(coef, got) >= 0.9);
      CHECK(a.r2 > 0.99);
    }
  }

  TEST_CASE("seeded and reported") {
    const auto v = words_vocab();
    const auto t = encode_text("pay the invoice now", v, 32).trimmed();
    auto f = [&](const TokenSequence& s) { return 0.1 * static_cast<double>(count_id(s, v.find("now"))); };
    LimeOptions o;
    o.seed = 4;
    o.threads = 2;
    const auto a = lime_explain(t, v, f, o);
    o.threads = 1;
    CHECK(a.to_json() == lime_explain(t, v, f, o).to_json());
    CHECK(a.kernel_width == doctest::Approx(0.75 * 2.0));
    CHECK(a.to_json().contains("kernel_width"));
  }

  TEST_CASE("lime errors") {
    const auto v = words_vocab();
    auto f = [](const TokenSequence&) { return 0.5; };
    CHECK_THROWS_AS(lime_explain(encode_text("", v, 8).trimmed(), v, f), ContractError);
    LimeOptions o;
    o.samples = 49;
    CHECK_THROWS_AS(lime_explain(encode_text("pay", v, 8).trimmed(), v, f, o), ContractError);
  }

  TEST_CASE("ridge solve") {
    // [[4,1],[1,3]] x = [1,2]  ->  x = [1/11, 7/11]
    const auto x = solve_ridge({4, 1, 1, 3}, {1, 2}, 2, 0.0);
    CHECK(x[0] == doctest::Approx(1.0 / 11));
    CHECK(x[1] == doctest::Approx(7.0 / 11));
    const auto r = solve_ridge({4, 1, 1, 3}, {1, 2}, 2, 1.0, {0});
    // [[4,1],[1,4]] x = [1,2]
    CHECK(r[0] == doctest::Approx(2.0 / 15));
    CHECK(r[1] == doctest::Approx(7.0 / 15));
  }
}
