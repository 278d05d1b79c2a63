#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "catbert/error.hpp"
#include "catbert/metrics.hpp"
#include "catbert/synthetic.hpp"
#include "catbert/tfidf.hpp"
#include "catbert/train.hpp"
#include "catbert/util.hpp"
#include "helpers.hpp"

using namespace catbert;

namespace {

std::vector<EmailRecord> timed(const std::vector<int>& seconds) {
  std::vector<EmailRecord> out;
  for (std::size_t i = 0; i < seconds.size(); ++i) {
    EmailRecord r;
    r.id = "r" + std::to_string(i);
    if (seconds[i] >= 0) r.first_seen = format_iso8601(1700000000 + seconds[i]);
    out.push_back(r);
  }
  return out;
}

std::vector<std::string> ids(const std::vector<EmailRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(*r.id);
  return out;
}

ModelConfig small_model(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden = 16;
  c.ffn = 32;
  c.heads = 2;
  c.max_positions = 64;
  c.plan = parse_plan("TATA");
  return c;
}

std::vector<Example> corpus_examples(std::size_t n, std::uint64_t seed, std::size_t max_len = 48) {
  SyntheticOptions o;
  o.records = n;
  o.seed = seed;
  return make_examples(synthetic_corpus(o), synthetic_vocabulary(), max_len, Truncation::keep_head, 1.0);
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("bce examples") {
    const std::vector<int> one = {1}, zero = {0};
    const std::vector<double> w1 = {1.0}, w100 = {100.0};
    CHECK(bce_loss(std::vector<double>{1.0 - 1e-12}, one, w1) < 1e-6);
    CHECK(bce_loss(std::vector<double>{0.5}, one, w1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(std::vector<double>{0.5}, zero, w100) == doctest::Approx(100 * std::log(2.0)).epsilon(1e-12));
    // Clamping keeps a confident mistake finite.
    CHECK(bce_loss(std::vector<double>{0.0}, one, w1) == doctest::Approx(-std::log(kProbClamp)));
    CHECK_THROWS_AS(bce_loss(std::vector<double>{0.5, 0.5}, one, w1), ContractError);
  }

  TEST_CASE("unit weights give plain bce and weights scale linearly") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.01, 0.99);
      const std::size_t n = 1 + rng() % 20;
      std::vector<double> p(n), ones(n, 1.0), scaled(n, 0.0);
      std::vector<int> y(n);
      double plain = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = u(rng);
        y[i] = static_cast<int>(rng() % 2);
        plain -= y[i] ? std::log(p[i]) : std::log(1.0 - p[i]);
      }
      plain /= static_cast<double>(n);
      CHECK(bce_loss(p, y, ones) == doctest::Approx(plain).epsilon(1e-12));
      const double k = 0.5 + static_cast<double>(rng() % 7);
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = 0.1 + u(rng);
      for (std::size_t i = 0; i < n; ++i) scaled[i] = k * w[i];
      CHECK(bce_loss(p, y, scaled) == doctest::Approx(k * bce_loss(p, y, w)).epsilon(1e-12));
    }
  }

  TEST_CASE("gradient through sigmoid is weight times (f - y) over n") {
    std::mt19937_64 rng(5);
    auto x = testing::random_param<double>("x", {6}, rng, -3, 3);
    const std::vector<double> y = {1, 0, 1, 1, 0, 0}, w = {1, 2, 0.5, 100, 1, 3};
    auto loss_of = [&](Tape<double>& t) { return bce(sigmoid(t.parameter(x)), y, w); };
    {
      Tape<double> t;
      t.backward(loss_of(t));
    }
    for (std::size_t i = 0; i < 6; ++i) {
      const double f = 1.0 / (1.0 + std::exp(-x.value[i]));
      CHECK((*x.grad)[i] == doctest::Approx(w[i] * (f - y[i]) / 6.0).epsilon(1e-12));
      // Central difference on the scalar loss.
      auto at = [&](double v) {
        const double orig = x.value[i];
        x.value[i] = v;
        Tape<double> t(false);
        const double l = loss_of(t).value()[0];
        x.value[i] = orig;
        return l;
      };
      const double h = 1e-6;
      CHECK((*x.grad)[i] == doctest::Approx((at(x.value[i] + h) - at(x.value[i] - h)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_SUITE("split") {
  TEST_CASE("ten records split 7/1/2") {
    const auto s = split_by_time(timed({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), SplitSpec{});
    CHECK(s.train.size() == 7);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 2);
  }

  TEST_CASE("equal timestamps keep input order") {
    const auto s = split_by_time(timed({5, 5, 5, 5, 5, 5, 5, 5, 5, 5}), SplitSpec{});
    CHECK(ids(s.train) == std::vector<std::string>{"r0", "r1", "r2", "r3", "r4", "r5", "r6"});
    CHECK(ids(s.test) == std::vector<std::string>{"r8", "r9"});
  }

  TEST_CASE("missing timestamps sort last") {
    const auto s = split_by_time(timed({-1, 3, -1, 1}), SplitSpec{0.5, 0.0, 0.5});
    CHECK(ids(s.train) == std::vector<std::string>{"r3", "r1"});
    CHECK(ids(s.test) == std::vector<std::string>{"r0", "r2"});
  }

  TEST_CASE("splits are a time-ordered partition") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      const std::size_t n = rng() % 60;
      std::vector<int> secs(n);
      std::iota(secs.begin(), secs.end(), 0);
      std::shuffle(secs.begin(), secs.end(), rng);
      const double a = static_cast<double>(rng() % 80) / 100.0;
      const double b = static_cast<double>(rng() % 20) / 100.0;
      const auto s = split_by_time(timed(secs), SplitSpec{a, b, 1.0 - a - b});
      CHECK(s.train.size() == static_cast<std::size_t>(std::floor(static_cast<double>(n) * a + 1e-9)));
      CHECK(s.train.size() + s.validation.size() + s.test.size() == n);
      std::multiset<std::string> all;
      for (const auto* part : {&s.train, &s.validation, &s.test}) {
        for (const auto& r : *part) all.insert(*r.id);
      }
      CHECK(std::set<std::string>(all.begin(), all.end()).size() == n);
      auto max_time = [](const std::vector<EmailRecord>& rs) {
        double m = -1;
        for (const auto& r : rs) m = std::max(m, *r.first_seen_seconds());
        return m;
      };
      auto min_time = [](const std::vector<EmailRecord>& rs) {
        double m = 1e18;
        for (const auto& r : rs) m = std::min(m, *r.first_seen_seconds());
        return m;
      };
      if (!s.train.empty() && !s.validation.empty()) CHECK(max_time(s.train) <= min_time(s.validation));
      if (!s.validation.empty() && !s.test.empty()) CHECK(max_time(s.validation) <= min_time(s.test));
      if (!s.train.empty() && !s.test.empty()) CHECK(max_time(s.train) <= min_time(s.test));
    }
  }

  TEST_CASE("fraction parsing") {
    const auto s = SplitSpec::parse("0.7,0.15,0.15");
    CHECK(s.validation == 0.15);
    CHECK_THROWS_AS(SplitSpec::parse("0.7,0.3"), ConfigError);
    CHECK_THROWS_AS(SplitSpec::parse("0.7,0.3,0.3"), ConfigError);
    CHECK_THROWS_AS(SplitSpec::parse("a,b,c"), ConfigError);
  }
}

TEST_SUITE("sampler") {
  TEST_CASE("heavy imbalance repeats the minority only") {
    std::vector<int> labels(1010, 0);
    for (std::size_t i = 1000; i < 1010; ++i) labels[i] = 1;
    const BalancedSampler s(labels, 8, 3);
    CHECK(s.batches_per_epoch() == 250);
    for (std::size_t e = 0; e < 2; ++e) {
      const auto batches = s.epoch(e);
      REQUIRE(batches.size() == 250);
      std::vector<int> seen(1010, 0);
      for (const auto& b : batches) {
        REQUIRE(b.size() == 8);
        int pos = 0;
        for (std::size_t i : b) {
          pos += labels[i];
          ++seen[i];
        }
        CHECK(pos == 4);
      }
      for (std::size_t i = 0; i < 1000; ++i) CHECK(seen[i] <= 1);
      CHECK(*std::max_element(seen.begin() + 1000, seen.end()) > 1);
    }
  }

  TEST_CASE("equal classes fill one batch") {
    std::vector<int> labels(128, 0);
    std::fill(labels.begin() + 64, labels.end(), 1);
    const auto batches = BalancedSampler(labels, 128, 0).epoch(0);
    REQUIRE(batches.size() == 1);
    CHECK(std::set<std::size_t>(batches[0].begin(), batches[0].end()).size() == 128);
  }

  TEST_CASE("same seed, same batches") {
    std::vector<int> labels(300, 0);
    for (std::size_t i = 0; i < 300; i += 7) labels[i] = 1;
    CHECK(BalancedSampler(labels, 16, 9).epoch(2) == BalancedSampler(labels, 16, 9).epoch(2));
    CHECK(BalancedSampler(labels, 16, 9).epoch(2) != BalancedSampler(labels, 16, 9).epoch(3));
    CHECK(BalancedSampler(labels, 16, 9).epoch(0) != BalancedSampler(labels, 16, 10).epoch(0));
  }

  TEST_CASE("balanced counts over random pools") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<int> labels(2 + rng() % 200);
      for (auto& l : labels) l = static_cast<int>(rng() % 5 == 0);
      labels[0] = 0;
      labels[1] = 1;
      const std::size_t batch = 2 * (1 + rng() % 10);
      const BalancedSampler s(labels, batch, seed);
      const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
      const std::size_t majority = std::max(pos, labels.size() - pos);
      CHECK(s.batches_per_epoch() == std::max<std::size_t>(1, 2 * majority / batch));
      std::vector<int> seen(labels.size(), 0);
      const bool neg_majority = labels.size() - pos >= pos;
      for (const auto& b : s.epoch(0)) {
        std::size_t p = 0;
        for (std::size_t i : b) {
          p += static_cast<std::size_t>(labels[i]);
          ++seen[i];
        }
        CHECK(p == batch / 2);
      }
      // Below half a batch the one-batch minimum must repeat the majority too.
      if (2 * majority >= batch) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if ((labels[i] == 0) == neg_majority) CHECK(seen[i] <= 1);
        }
      }
    }
  }

  TEST_CASE("sampler errors") {
    const std::vector<int> mixed = {0, 1, 0, 1};
    CHECK_THROWS_AS(BalancedSampler(mixed, 3, 0), ContractError);
    CHECK_THROWS_AS(BalancedSampler(std::vector<int>{0, 0, 0}, 2, 0), DatasetError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero learning rate changes nothing") {
    auto examples = corpus_examples(200, 1);
    // One balanced batch holding every example makes each epoch identical.
    std::vector<Example> pos, neg;
    for (const auto& e : examples) (e.label ? pos : neg).push_back(e);
    neg.resize(pos.size());
    std::vector<Example> even = neg;
    even.insert(even.end(), pos.begin(), pos.end());

    CatBertModel m(small_model(synthetic_vocabulary().size()), 4);
    const CatBertModel before = m;
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = even.size();
    c.adam.learning_rate = 0.0;
    const auto h = train(m, even, {}, c);
    REQUIRE(h.epochs.size() == 3);
    CHECK(h.epochs[1].train_loss == h.epochs[0].train_loss);
    CHECK(h.epochs[2].train_loss == h.epochs[0].train_loss);
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      CHECK(m.parameters()[i].value.data()[0] == before.parameters()[i].value.data()[0]);
      CHECK(std::equal(m.parameters()[i].value.data().begin(), m.parameters()[i].value.data().end(),
                       before.parameters()[i].value.data().begin()));
    }
  }

  TEST_CASE("separable corpus: loss falls and validation AUC is high") {
    const auto train_set = corpus_examples(600, 11);
    const auto val = corpus_examples(300, 12);
    CatBertModel m(small_model(synthetic_vocabulary().size()), 13);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 16;
    c.adam.learning_rate = 1e-3;
    c.seed = 13;
    const auto h = train(m, train_set, val, c);
    REQUIRE(h.epochs.size() == 3);
    CHECK(h.epochs[1].train_loss < h.epochs[0].train_loss);
    CHECK(h.epochs[2].train_loss < h.epochs[1].train_loss);
    REQUIRE(h.best_val_auc.has_value());
    CHECK(*h.best_val_auc >= 0.95);

    // restore_best leaves the best epoch's weights in place.
    ScoreSet s;
    s.scores = score_examples(m, val);
    for (const auto& e : val) s.labels.push_back(e.label);
    CHECK(roc_auc(s) == *h.best_val_auc);
    double top = 0;
    for (const auto& e : h.epochs) top = std::max(top, *e.val_auc);
    CHECK(top == *h.best_val_auc);
  }

  TEST_CASE("frozen tensors do not move") {
    const auto examples = corpus_examples(120, 2);
    ModelConfig mc = small_model(synthetic_vocabulary().size());
    mc.plan = parse_plan("TATATA");
    CatBertModel m(mc, 5);
    const CatBertModel before = m;
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 8;
    c.adam.learning_rate = 1e-2;
    c.freeze = "partial-finetune";
    train(m, examples, {}, c);
    const auto mask = FreezeMask::preset("partial-finetune", mc);
    std::size_t frozen = 0, moved = 0;
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      const auto& a = m.parameters()[i].value.data();
      const auto& b = before.parameters()[i].value.data();
      const bool same = std::equal(a.begin(), a.end(), b.begin());
      if (mask.matches(m.parameters()[i].name)) {
        CAPTURE(m.parameters()[i].name);
        CHECK(same);
        ++frozen;
      } else {
        moved += !same;
      }
    }
    CHECK(frozen > 0);
    CHECK(moved > 0);
  }

  TEST_CASE("same seed, same history and weights") {
    const auto examples = corpus_examples(120, 3);
    auto run = [&]() {
      CatBertModel m(small_model(synthetic_vocabulary().size()), 6);
      TrainConfig c;
      c.epochs = 2;
      c.batch_size = 8;
      c.adam.learning_rate = 1e-3;
      c.seed = 6;
      const auto h = train(m, examples, examples, c);
      return std::make_pair(history_to_json(h).dump(), m);
    };
    const auto [ha, ma] = run();
    const auto [hb, mb] = run();
    CHECK(ha == hb);
    for (std::size_t i = 0; i < ma.parameters().size(); ++i) {
      const auto& a = ma.parameters()[i].value.data();
      CHECK(std::equal(a.begin(), a.end(), mb.parameters()[i].value.data().begin()));
    }
  }

  TEST_CASE("non-finite loss aborts with batch details") {
    const auto examples = corpus_examples(60, 4);
    CatBertModel m(small_model(synthetic_vocabulary().size()), 7);
    m.at("classifier.output.bias").value[0] = std::nanf("");
    TrainConfig c;
    c.batch_size = 4;
    try {
      train(m, examples, {}, c);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 1 batch 1") != std::string::npos);
      CHECK(msg.find("samples") != std::string::npos);
    }
  }

  TEST_CASE("bec records carry the extra weight") {
    std::vector<EmailRecord> rs(3);
    rs[0].weight = 2.0;
    rs[1].group = "bec";
    rs[2].group = "bec";
    rs[2].weight = 0.5;
    const auto ex = make_examples(rs, synthetic_vocabulary(), 16, Truncation::keep_head, 100.0);
    CHECK(ex[0].weight == 2.0);
    CHECK(ex[1].weight == 100.0);
    CHECK(ex[2].weight == 50.0);
  }

  TEST_CASE("config json") {
    TrainConfig c;
    c.epochs = 7;
    c.freeze = "partial-finetune";
    c.truncation = Truncation::keep_tail;
    const auto back = train_config_from_json(train_config_to_json(c));
    CHECK(back.epochs == 7);
    CHECK(back.freeze == "partial-finetune");
    CHECK(back.truncation == Truncation::keep_tail);
    CHECK_THROWS_AS(train_config_from_json({{"epoch", 3}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"batch_size", 7}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"epochs", 0}}), ConfigError);
  }
}

TEST_SUITE("tfidf") {
  TEST_CASE("word n-grams") {
    CHECK(word_ngrams("Pay the, INVOICE", 1, 2) ==
          std::vector<std::string>{"pay", "the", "invoice", "pay the", "the invoice"});
    CHECK(word_ngrams("", 1, 2).empty());
  }

  TEST_CASE("one repeated document") {
    const std::vector<std::string> docs(4, "please pay now");
    const std::vector<int> labels = {1, 1, 1, 0};
    const std::vector<double> w(4, 1.0);
    TfidfConfig c;
    c.balance_classes = false;
    c.iterations = 5000;
    const auto lr = TfidfLogisticRegression::fit(docs, labels, w, c);
    for (const char* t : {"please", "pay", "now", "please pay", "pay now"}) CHECK(lr.idf(t) == doctest::Approx(1.0));
    CHECK(lr.predict("please pay now") == doctest::Approx(0.75).epsilon(1e-3));
    c.balance_classes = true;
    CHECK(TfidfLogisticRegression::fit(docs, labels, w, c).predict("please pay now") ==
          doctest::Approx(0.5).epsilon(1e-3));
  }

  TEST_CASE("unseen words contribute nothing") {
    const std::vector<std::string> docs = {"wire the money", "lunch at noon"};
    const auto lr = TfidfLogisticRegression::fit(docs, std::vector<int>{1, 0}, std::vector<double>{1, 1});
    CHECK(lr.features("zebra quokka").empty());
    CHECK(lr.predict("zebra quokka") == doctest::Approx(1.0 / (1.0 + std::exp(-lr.bias()))));
    CHECK(lr.predict("zebra wire quokka") > lr.predict("zebra quokka"));
  }

  TEST_CASE("planted token corpus") {
    SyntheticOptions o;
    o.records = 600;
    o.seed = 21;
    const auto train_rs = synthetic_corpus(o);
    o.seed = 22;
    const auto test_rs = synthetic_corpus(o);
    std::vector<std::string> docs;
    std::vector<int> labels;
    std::vector<double> w;
    for (const auto& r : train_rs) {
      docs.push_back(build_content(r));
      labels.push_back(r.label);
      w.push_back(1.0);
    }
    const auto lr = TfidfLogisticRegression::fit(docs, labels, w);
    ScoreSet s;
    for (const auto& r : test_rs) {
      s.scores.push_back(lr.predict(build_content(r)));
      s.labels.push_back(r.label);
    }
    CHECK(roc_auc(s) >= 0.9);
  }

  TEST_CASE("json round trip and errors") {
    const std::vector<std::string> docs = {"a b", "b c", "c d"};
    const auto lr = TfidfLogisticRegression::fit(docs, std::vector<int>{1, 0, 1}, std::vector<double>{1, 1, 1});
    const auto back = TfidfLogisticRegression::from_json(lr.to_json());
    CHECK(back.predict("a c") == lr.predict("a c"));
    CHECK_THROWS_AS(TfidfLogisticRegression::fit({}, {}, {}), DatasetError);
  }
}
