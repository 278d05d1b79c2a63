// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/synthetic.hpp"

#include <array>
#include <cstdio>
#include <random>
#include <set>
#include <string_view>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

namespace {

constexpr std::array<std::string_view, 120> kFiller = {
    "meeting",  "schedule", "report",   "project",  "team",      "update",   "review",   "budget",   "quarter",
    "lunch",    "agenda",   "document", "attached", "please",    "thanks",   "regards",  "friday",   "monday",
    "tuesday",  "deadline", "client",   "proposal", "draft",     "feedback", "call",     "notes",    "office",
    "plan",     "summary",  "invoice",  "order",    "account",   "payment",  "urgent",   "today",    "tomorrow",
    "week",     "month",    "the",      "a",        "to",        "and",      "of",       "for",      "in",
    "on",       "with",     "is",       "we",       "you",       "our",      "your",     "this",     "that",
    "can",      "will",     "need",     "send",     "share",     "check",    "confirm",  "discuss",  "prepare",
    "finish",   "start",    "move",     "join",     "reply",     "forward",  "sign",     "approve",  "request",
    "contract", "slides",   "numbers",  "sales",    "marketing", "product",  "customer", "vendor",   "support",
    "training", "hiring",   "travel",   "expenses", "calendar",  "room",     "time",     "morning",  "afternoon",
    "soon",     "quick",    "question", "answer",   "list",      "items",    "details",  "info",     "status",
    "progress", "release",  "launch",   "design",   "code",      "test",     "bug",      "fix",      "server",
    "data",     "analysis", "results",  "goals",    "priority",  "office",   "hello",    "hi",       "team",
    "kind",     "best",     "new",
};

constexpr std::array<std::string_view, 12> kSubjects = {
    "quick question",  "meeting update",   "project status",  "budget review",  "please review",  "notes from call",
    "schedule change", "proposal draft",   "invoice details", "action items",   "weekly summary", "follow up",
};

constexpr std::array<std::string_view, 6> kExternalDomains = {"mailhost.example", "globalbiz.example",
                                                              "fastmail.example", "partner-co.example",
                                                              "secure-notice.example", "inbox.example"};

constexpr std::string_view kHomeDomain = "corp.example";

std::string address(std::mt19937_64& rng, std::string_view domain) {
  return "user" + std::to_string(rng() % 500) + "@" + std::string(domain);
}

}  // namespace

std::string format_iso8601(std::int64_t seconds) {
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  // Civil date from days since 1970-01-01 (proleptic Gregorian).
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const std::int64_t doe = days - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = yoe + era * 400 + (m <= 2 ? 1 : 0);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lldT%02lld:%02lld:%02lldZ", static_cast<long long>(y),
                static_cast<long long>(m), static_cast<long long>(d), static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60), static_cast<long long>(rem % 60));
  return buf;
}

std::vector<EmailRecord> synthetic_corpus(const SyntheticOptions& options) {
  if (!(options.malicious_fraction > 0.0 && options.malicious_fraction < 1.0)) {
    throw ConfigError("malicious fraction must be in (0, 1)");
  }
  std::mt19937_64 rng(mix_seed(options.seed, 0x5e7));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](auto const& list) { return std::string(list[rng() % list.size()]); };

  // Exactly round(n * fraction) malicious records at random positions.
  const std::size_t n = options.records;
  const auto n_mal = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.malicious_fraction));
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_mal)), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::int64_t clock = 1704067200;  // 2024-01-01T00:00:00Z
  std::vector<EmailRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    EmailRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    r.id = id;
    r.label = labels[i];
    clock += 60 + static_cast<std::int64_t>(rng() % 3600);
    r.first_seen = format_iso8601(clock);

    bool planted = false;
    bool external = false;
    if (!options.context_dependent) {
      planted = r.label == 1;
      external = r.label == 1 || unit(rng) < 0.5;
    } else if (r.label == 1) {
      planted = external = true;
    } else {
      // Benign: either no planted word with any headers, or the planted
      // word sent internally (twice as common as the malicious copies).
      const double planted_share = 2.0 * options.malicious_fraction / (1.0 - options.malicious_fraction);
      planted = unit(rng) < planted_share;
      external = planted ? false : unit(rng) < 0.5;
    }

    r.subject = pick(kSubjects);
    const std::size_t words = 15 + rng() % 26;
    std::vector<std::string> body;
    for (std::size_t w = 0; w < words; ++w) body.push_back(pick(kFiller));
    if (planted) body.insert(body.begin() + static_cast<std::ptrdiff_t>(rng() % (body.size() + 1)), kPlantedWord);
    std::string text;
    for (std::size_t w = 0; w < body.size(); ++w) {
      if (w) text += (rng() % 9 == 0) ? ". " : " ";
      text += body[w];
    }
    text += ".";
    if (rng() % 4 == 0) {
      r.body_html = "<div><p>" + text + "</p></div>";
    } else {
      r.body_text = text;
    }

    const std::string sender_domain = external ? pick(kExternalDomains) : std::string(kHomeDomain);
    r.from = address(rng, sender_domain);
    const std::size_t n_to = 1 + rng() % 4;
    const std::size_t n_cc = rng() % 4;
    for (std::size_t k = 0; k < n_to; ++k) r.to.push_back(address(rng, kHomeDomain));
    for (std::size_t k = 0; k < n_cc; ++k) r.cc.push_back(address(rng, kHomeDomain));
    r.group = (r.label == 1 && unit(rng) < options.bec_fraction) ? "bec" : "english";
    out.push_back(std::move(r));
  }
  return out;
}

Vocabulary synthetic_vocabulary() {
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto add = [&](std::string t) {
    if (seen.insert(t).second) tokens.push_back(std::move(t));
  };
  for (char c : std::string_view("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")) add(std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) add(std::string(1, c));
  for (char c = 'a'; c <= 'z'; ++c) add(std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) add("##" + std::string(1, c));
  for (char c = 'a'; c <= 'z'; ++c) add("##" + std::string(1, c));
  for (auto w : kFiller) add(std::string(w));
  for (auto s : kSubjects) {
    for (const auto& w : split(s, ' ')) add(w);
  }
  for (const char* t : {"wire", "bank", "money", "transfer", "##transfer", "##payment", "##s", "##ed", "##ing", "##er",
                        "##tion", "##ly", "gathering", "paper", "plan", "remittance", "funds", "user", "corp",
                        "example"}) {
    add(t);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

SynonymTable synthetic_synonyms() {
  return {
      {kPlantedWord, {"banktransfer", "wirepayment", "remittance"}},
      {"meeting", {"gathering", "session"}},
      {"report", {"paper", "writeup"}},
      {"urgent", {"pressing", "critical"}},
      {"payment", {"remittance", "settlement"}},
      {"invoice", {"bill", "statement"}},
      {"send", {"transmit", "forward"}},
      {"please", {"kindly"}},
      {"quick", {"fast", "brief"}},
      {"account", {"profile"}},
      {"review", {"assess", "examine"}},
      {"confirm", {"verify"}},
      {"document", {"file", "paper"}},
      {"today", {"now"}},
      {"thanks", {"cheers"}},
  };
}

}  // namespace catbert
