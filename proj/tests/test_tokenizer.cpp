#include <doctest.h>

#include <fstream>
#include <random>

#include "catbert/error.hpp"
#include "catbert/tokenizer.hpp"
#include "helpers.hpp"

using namespace catbert;

namespace {

const std::vector<std::string> kToy = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "pay", "##ment", "money"};

std::filesystem::path write_lines(const std::string& name, const std::vector<std::string>& lines) {
  const auto path = testing::scratch_dir("tok") / name;
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
  return path;
}

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("toy vocabulary file") {
    const auto v = Vocabulary::load(write_lines("toy.txt", kToy));
    CHECK(v.size() == 7);
    CHECK(v.cls_id() == 2);
    CHECK(v.pad_id() == 0);
    CHECK(v.find("##ment") == 5);
    for (std::int32_t i = 0; i < 7; ++i) CHECK(v.find(v.token(i)) == i);
  }

  TEST_CASE("empty file lacks specials") {
    try {
      Vocabulary::load(write_lines("empty.txt", {}));
      FAIL("expected VocabularyError");
    } catch (const VocabularyError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[PAD]") != std::string::npos);
      CHECK(msg.find("[SEP]") != std::string::npos);
    }
  }

  TEST_CASE("duplicate token names both lines") {
    auto lines = kToy;
    lines.insert(lines.begin() + 5, "x");
    lines.insert(lines.begin() + 6, "y");
    lines.push_back("pay");  // line 10; first copy on line 5
    try {
      Vocabulary::from_tokens(lines);
      FAIL("expected VocabularyError");
    } catch (const VocabularyError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("pay") != std::string::npos);
      CHECK(msg.find('5') != std::string::npos);
      CHECK(msg.find("10") != std::string::npos);
    }
  }

  TEST_CASE("save and load round trip") {
    const auto v = Vocabulary::from_tokens(kToy);
    const auto path = testing::scratch_dir("tok-rt") / "v.txt";
    v.save(path);
    CHECK(Vocabulary::load(path).tokens() == kToy);
  }

  TEST_CASE("wordpiece examples") {
    const auto v = Vocabulary::from_tokens(kToy);
    CHECK(wordpiece("payment", v) == std::vector<std::string>{"pay", "##ment"});
    CHECK(wordpiece("", v).empty());
    CHECK(wordpiece("xyzzy", v) == std::vector<std::string>{"[UNK]"});
    CHECK(wordpiece("Money, PAY!", v) == std::vector<std::string>{"money", "[UNK]", "pay", "[UNK]"});
  }

  TEST_CASE("basic tokenization splits punctuation") {
    CHECK(basic_tokenize("Hi, there!  ok") == std::vector<std::string>{"hi", ",", "there", "!", "ok"});
    CHECK(basic_tokenize("  \t\n").empty());
  }

  TEST_CASE("encode short input") {
    const auto v = Vocabulary::from_tokens(kToy);
    const auto t = encode("payment", "", v, 8);
    CHECK(t.ids == std::vector<std::int32_t>{2, 4, 5, 3, 0, 0, 0, 0});
    CHECK(t.attention_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});
    CHECK(t.original_length == 2);
    CHECK(t.trimmed().ids == std::vector<std::int32_t>{2, 4, 5, 3});
  }

  TEST_CASE("encode truncates to max_len") {
    const auto v = Vocabulary::from_tokens(kToy);
    std::string body;
    for (int i = 0; i < 150; ++i) body += "pay money ";  // 300 content tokens
    for (auto side : {Truncation::keep_head, Truncation::keep_tail}) {
      const auto t = encode_text(body, v, 128, side);
      CHECK(t.ids.size() == 128);
      CHECK(t.ids.front() == v.cls_id());
      CHECK(t.ids.back() == v.sep_id());
      CHECK(t.unmasked() == 128);
      CHECK(t.original_length == 300);
    }
    CHECK(encode_text(body, v, 128, Truncation::keep_head).ids[1] == 4);
    CHECK(encode_text(body, v, 128, Truncation::keep_tail).ids[126] == 6);
    CHECK(encode_text("pay money pay", v, 4, Truncation::keep_tail).ids == std::vector<std::int32_t>{2, 6, 4, 3});
  }

  TEST_CASE("encode empty input") {
    const auto v = Vocabulary::from_tokens(kToy);
    const auto t = encode("", "", v, 5);
    CHECK(t.ids == std::vector<std::int32_t>{2, 3, 0, 0, 0});
    CHECK_THROWS_AS(encode("a", "b", v, 2), ContractError);
  }

  TEST_CASE("truncation names parse") {
    CHECK(parse_truncation("head") == Truncation::keep_head);
    CHECK(parse_truncation("tail") == Truncation::keep_tail);
    CHECK(to_string(Truncation::keep_tail) == "tail");
    CHECK_THROWS_AS(parse_truncation("middle"), ConfigError);
  }

  TEST_CASE("length and mask invariants over random text") {
    const auto v = Vocabulary::from_tokens(kToy);
    const std::vector<std::string> words = {"pay", "payment", "money", "zzz", ",", "moneypay"};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      std::mt19937_64 rng(seed);
      std::string text;
      const std::size_t n = rng() % 40;
      for (std::size_t i = 0; i < n; ++i) text += words[rng() % words.size()] + " ";
      const std::size_t max_len = 3 + rng() % 30;
      const auto t = encode_text(text, v, max_len);
      const std::size_t content = wordpiece(text, v).size();
      CHECK(t.ids.size() == max_len);
      CHECK(t.unmasked() == std::min(content + 2, max_len));
      for (std::size_t i = 0; i < max_len; ++i) CHECK((t.attention_mask[i] == 1) == (t.ids[i] != v.pad_id()));
      CHECK(t.ids[0] == v.cls_id());
      CHECK(t.ids[t.unmasked() - 1] == v.sep_id());
    }
  }

  TEST_CASE("decode round trip over in-vocabulary words") {
    const auto v = Vocabulary::from_tokens(
        {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "pay", "##ment", "money", "send", "##s", "wire", "##transfer", "now"});
    const std::vector<std::string> words = {"pay", "payment", "money", "sends", "wiretransfer", "now", "send", "pays"};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<std::string> chosen;
      std::string text;
      for (std::size_t i = 0, n = 1 + rng() % 12; i < n; ++i) {
        chosen.push_back(words[rng() % words.size()]);
        text += (i ? " " : "") + chosen.back();
      }
      const auto t = encode_text(text, v, 64);
      CHECK(merge_wordpieces(decode(t.ids, v)) == chosen);
    }
  }

  TEST_CASE("homoglyph splits into sub-pieces") {
    const auto v = Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "payment", "p", "@", "##y", "##ment",
                                            "y", "##ay"});
    const auto pieces = wordpiece("p@yment", v);
    CHECK(pieces.size() > 1);
    CHECK(std::find(pieces.begin(), pieces.end(), "payment") == pieces.end());
    CHECK(pieces == std::vector<std::string>{"p", "@", "y", "##ment"});
  }
}
