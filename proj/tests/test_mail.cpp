#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "catbert/error.hpp"
#include "catbert/mail.hpp"
#include "helpers.hpp"

using namespace catbert;

namespace {

EmailRecord headers(std::string from, std::vector<std::string> to, std::vector<std::string> cc = {}) {
  EmailRecord r;
  r.from = std::move(from);
  r.to = std::move(to);
  r.cc = std::move(cc);
  return r;
}

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  const auto path = testing::scratch_dir("mail-" + name) / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_SUITE("mail") {
  TEST_CASE("same-domain mail is internal") {
    const auto c = extract_context(headers("a@acme.com", {"b@acme.com"}));
    CHECK(c.features == ContextFeatures{1, 0, 1, 0});
    CHECK(c.warnings.empty());
  }

  TEST_CASE("any foreign recipient makes it external") {
    const auto c = extract_context(headers("a@acme.com", {"b@other.org", "c@acme.com"}, {"d@x.io", "e@x.io"}));
    CHECK(c.features == ContextFeatures{0, 1, 2, 2});
    // A foreign CC alone is enough too.
    CHECK(extract_context(headers("a@acme.com", {"b@acme.com"}, {"z@x.io"})).features.external == 1);
  }

  TEST_CASE("empty headers default to external with a warning") {
    const auto c = extract_context(headers("", {}));
    CHECK(c.features == ContextFeatures{0, 1, 0, 0});
    CHECK_FALSE(c.warnings.empty());
  }

  TEST_CASE("domain comparison ignores case and trailing dots") {
    CHECK(extract_context(headers("Boss <a@ACME.com.>", {"b@acme.COM"})).features.internal == 1);
    CHECK(address_domain("x@y@Corp.Example.") == "corp.example");
    CHECK_FALSE(address_domain("no-at-sign").has_value());
    CHECK_FALSE(address_domain("trailing@").has_value());
  }

  TEST_CASE("internal plus external is one on parseable input") {
    const std::vector<std::string> pool = {"a@x.com", "b@x.com", "c@y.org", "D@X.COM", "e@z.net"};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<std::string> to, cc;
      for (std::size_t i = 0, n = 1 + rng() % 4; i < n; ++i) to.push_back(pool[rng() % pool.size()]);
      for (std::size_t i = 0, n = rng() % 3; i < n; ++i) cc.push_back(pool[rng() % pool.size()]);
      const auto r = headers(pool[rng() % pool.size()], to, cc);
      const auto c = extract_context(r);
      CHECK(c.features.internal + c.features.external == 1);
      CHECK(c.features.n_recipients == to.size());
      CHECK(c.features.n_cc == cc.size());
      CHECK(extract_context(r).features == c.features);
    }
  }

  TEST_CASE("context vector is log scaled") {
    const auto v = ContextFeatures{0, 1, 3, 0}.to_vector();
    CHECK(v[0] == 0.0f);
    CHECK(v[1] == 1.0f);
    CHECK(v[2] == doctest::Approx(std::log(4.0)));
    CHECK(v[3] == 0.0f);
  }

  TEST_CASE("html basics") {
    CHECK(html_to_text("<p>Hello <b>world</b></p>") == "Hello world");
    CHECK(html_to_text("pay<script>x=1</script>ment &amp; send") == "payment & send");
    CHECK(html_to_text("<span>p</span><span>ayment</span>") == "payment");
    CHECK(html_to_text("&lt;tag&gt; &quot;q&quot; &#65;&#x42;") == "<tag> \"q\" AB");
    CHECK(html_to_text("<style>p{color:red}</style>text") == "text");
    CHECK(html_to_text("<p>unclosed <b") == "unclosed");
    CHECK(html_to_text("") == "");
  }

  TEST_CASE("inline tags join, block tags separate") {
    struct Case {
      const char* html;
      const char* text;
    };
    const Case cases[] = {
        {"<b>pa</b>y", "pay"},
        {"<i>p</i><u>a</u><em>y</em>", "pay"},
        {"<a href='x'>pay</a>ment", "payment"},
        {"p<span class=\"x>y\">a</span>y", "pay"},
        {"pay<!-- hidden -->ment", "payment"},
        {"<font color=red>p</font>ayment", "payment"},
        {"<strong>wire</strong><small>transfer</small>", "wiretransfer"},
        {"pay<wbr>ment", "payment"},
        {"<code>pay</code><kbd>ment</kbd>", "payment"},
        {"<sup>1</sup>st", "1st"},
        {"pay<br>ment", "pay ment"},
        {"pay<br/>ment", "pay ment"},
        {"<p>pay</p><p>ment</p>", "pay ment"},
        {"<div>pay</div>ment", "pay ment"},
        {"<li>one</li><li>two</li>", "one two"},
        {"<td>a</td><td>b</td>", "a b"},
        {"<h1>title</h1>body", "title body"},
        {"pay<hr>ment", "pay ment"},
        {"<tr><td>x</td></tr><tr><td>y</td></tr>", "x y"},
        {"<blockquote>q</blockquote>r", "q r"},
    };
    for (const auto& c : cases) {
      CAPTURE(c.html);
      CHECK(html_to_text(c.html) == c.text);
    }
  }

  TEST_CASE("html_to_text is idempotent and leaves no markup") {
    const std::vector<std::string> parts = {"<p>", "</p>", "<b>", "pay", " ", "&amp;", "<script>s</script>",
                                            "<div class='a'>", "x", "&#64;", "<br>", "&nbsp;"};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      std::mt19937_64 rng(seed);
      std::string html;
      for (std::size_t i = 0, n = rng() % 15; i < n; ++i) html += parts[rng() % parts.size()];
      const auto once = html_to_text(html);
      EmailRecord r;
      r.body_html = html;
      CHECK(build_content(r).find_first_of("<>") == std::string::npos);
      // An escaped "&amp;lt;" legitimately decodes one level per call, so
      // idempotence is checked when no '&' survives.
      if (once.find('<') == std::string::npos && once.find('&') == std::string::npos) {
        CHECK(html_to_text(once) == once);
      }
    }
  }

  TEST_CASE("build_content") {
    EmailRecord r;
    r.subject = "hi";
    r.body_text = "pay me";
    CHECK(build_content(r) == "hi pay me");
    r.body_text.reset();
    r.body_html = "<p>pay</p>";
    CHECK(build_content(r) == "hi pay");
    r.body_text = "plain";
    CHECK(build_content(r) == "hi plain");
    CHECK(build_content(EmailRecord{}) == " ");
  }

  TEST_CASE("load dataset") {
    const std::string good =
        R"({"subject":"a","body_text":"x","from":"a@b.c","to":["d@b.c"],"label":0})" "\n"
        R"({"subject":"b","body_html":"<p>y</p>","from":"a@b.c","to":"e@f.g","cc":[],"label":1,"group":"bec","weight":2.5,"first_seen":"2024-01-02T03:04:05Z","extra":7})" "\n"
        R"({"id":12,"subject":"c","from":"","to":[],"label":0})" "\n";
    const auto load = load_dataset(write_text("good.jsonl", good));
    CHECK(load.errors.empty());
    REQUIRE(load.records.size() == 3);
    CHECK(load.records[1].to == std::vector<std::string>{"e@f.g"});
    CHECK(load.records[1].weight == 2.5);
    CHECK(load.records[1].group == "bec");
    CHECK(load.records[2].id == "12");
    CHECK(load.records[1].first_seen_seconds().has_value());

    const std::string bad = std::string(R"({"subject":"a","from":"","to":[],"label":2})") + "\n" +
                            R"({"subject":"b","from":"","to":[],"label":1})" + "\n" +
                            R"({"subject":"c","from":"","to":[]})" + "\n" + "not json\n";
    const auto path = write_text("bad.jsonl", bad);
    const auto partial = load_dataset(path);
    CHECK(partial.records.size() == 1);
    REQUIRE(partial.errors.size() == 3);
    CHECK(partial.errors[0].line == 1);
    CHECK(partial.errors[1].line == 3);
    CHECK(partial.errors[2].line == 4);
    CHECK_THROWS_AS(load_dataset(path, true), DatasetError);

    CHECK(load_dataset(write_text("empty.jsonl", "")).records.empty());
    CHECK(load_dataset(write_text("neg.jsonl", R"({"label":1,"weight":-1})" "\n")).errors.size() == 1);
  }

  TEST_CASE("dataset round trip") {
    std::vector<EmailRecord> records;
    for (int i = 0; i < 20; ++i) {
      EmailRecord r;
      if (i % 3) r.id = "r" + std::to_string(i);
      r.subject = "subject \"" + std::to_string(i) + "\" \xc3\xa9";
      if (i % 2) r.body_text = "line\nbreak"; else r.body_html = "<p>x</p>";
      r.from = "a@b.c";
      r.to = {"x@y.z", "w@b.c"};
      if (i % 4 == 0) r.cc = {"q@r.s"};
      r.label = i % 2;
      if (i % 5) r.group = "english";
      r.weight = 1.0 + i * 0.25;
      if (i % 2) r.first_seen = "2024-03-0" + std::to_string(1 + i % 9) + "T00:00:00Z";
      records.push_back(r);
    }
    const auto path = testing::scratch_dir("mail-rt") / "rt.jsonl";
    write_dataset(path, records);
    CHECK(load_dataset(path, true).records == records);
  }
}
