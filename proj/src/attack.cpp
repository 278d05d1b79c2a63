// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/attack.hpp"

#include <cctype>
#include <random>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

using nlohmann::json;

AttackKind parse_attack_kind(std::string_view text) {
  if (text == "synonym") return AttackKind::synonym;
  if (text == "typo") return AttackKind::typo;
  if (text == "homoglyph") return AttackKind::homoglyph;
  throw ConfigError("attack kind must be synonym, typo or homoglyph, got '" + std::string(text) + "'");
}

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::synonym:
      return "synonym";
    case AttackKind::typo:
      return "typo";
    case AttackKind::homoglyph:
      return "homoglyph";
  }
  return "?";
}

HomoglyphMap default_homoglyphs() {
  return {{'a', "@"}, {'o', "0"}, {'e', "3"}, {'i', "1"}, {'l', "|"}, {'s', "$"}};
}

void AttackSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("attack rate must be in [0, 1]");
}

SynonymTable synonyms_from_json(const json& j) {
  SynonymTable out;
  if (!j.is_object()) throw ConfigError("synonym table must be a JSON object");
  for (const auto& [word, value] : j.items()) {
    if (value.is_string()) {
      out[to_lower_ascii(word)] = {value.get<std::string>()};
    } else if (value.is_array() && !value.empty()) {
      out[to_lower_ascii(word)] = value.get<std::vector<std::string>>();
    } else {
      throw ConfigError("synonyms for '" + word + "' must be a string or a non-empty list");
    }
  }
  return out;
}

HomoglyphMap homoglyphs_from_json(const json& j) {
  HomoglyphMap out;
  if (!j.is_object()) throw ConfigError("homoglyph map must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key.size() != 1 || !value.is_string()) throw ConfigError("homoglyph keys must be single ASCII characters");
    out[key[0]] = value.get<std::string>();
  }
  return out;
}

namespace {

bool is_word_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

struct WordParts {
  std::string_view lead, core, tail;
};

WordParts split_word(std::string_view w) {
  std::size_t a = 0, b = w.size();
  while (a < b && is_word_punct(w[a])) ++a;
  while (b > a && is_word_punct(w[b - 1])) --b;
  return {w.substr(0, a), w.substr(a, b - a), w.substr(b)};
}

bool ascii_letters(std::string_view s) {
  for (char c : s) {
    if (!std::isalpha(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

bool eligible(std::string_view word, const AttackSpec& spec) {
  const auto parts = split_word(word);
  switch (spec.kind) {
    case AttackKind::synonym:
      return !parts.core.empty() && spec.synonyms.count(to_lower_ascii(parts.core)) > 0;
    case AttackKind::typo:
      return parts.core.size() >= 2 && ascii_letters(parts.core);
    case AttackKind::homoglyph:
      for (char c : word) {
        if (spec.homoglyphs.count(static_cast<char>(std::tolower(static_cast<unsigned char>(c))))) return true;
      }
      return false;
  }
  return false;
}

std::string match_case(std::string_view original, std::string replacement) {
  if (!original.empty() && std::isupper(static_cast<unsigned char>(original[0])) && !replacement.empty()) {
    replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  }
  return replacement;
}

std::string typo(std::string_view core, std::mt19937_64& rng) {
  std::string s(core);
  const std::size_t n = s.size();
  std::size_t op = rng() % 3;
  if (op == 0) {
    std::vector<std::size_t> swappable;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (s[i] != s[i + 1]) swappable.push_back(i);
    }
    if (swappable.empty()) {
      op = 1;
    } else {
      const std::size_t i = swappable[rng() % swappable.size()];
      std::swap(s[i], s[i + 1]);
      return s;
    }
  }
  const std::size_t i = rng() % n;
  if (op == 1) {
    s.erase(i, 1);
  } else {
    s.insert(i, 1, s[i]);
  }
  return s;
}

std::string perturb(std::string_view word, const AttackSpec& spec, std::mt19937_64& rng) {
  const auto parts = split_word(word);
  switch (spec.kind) {
    case AttackKind::synonym: {
      const auto& options = spec.synonyms.at(to_lower_ascii(parts.core));
      const std::string& pick = options[rng() % options.size()];
      return std::string(parts.lead) + match_case(parts.core, pick) + std::string(parts.tail);
    }
    case AttackKind::typo:
      return std::string(parts.lead) + typo(parts.core, rng) + std::string(parts.tail);
    case AttackKind::homoglyph: {
      std::string out;
      for (char c : word) {
        const auto it = spec.homoglyphs.find(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (it != spec.homoglyphs.end()) {
          out += it->second;
        } else {
          out.push_back(c);
        }
      }
      return out;
    }
  }
  return std::string(word);
}

std::string attack_with(std::string_view text, const AttackSpec& spec, std::uint64_t stream) {
  spec.validate();
  std::mt19937_64 rng(stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      out.push_back(text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view word = text.substr(i, j - i);
    if (eligible(word, spec) && unit(rng) < spec.rate) {
      out += perturb(word, spec, rng);
    } else {
      out += word;
    }
    i = j;
  }
  return out;
}

}  // namespace

std::string attack_text(std::string_view text, const AttackSpec& spec) { return attack_with(text, spec, spec.seed); }

EmailRecord attack_record(const EmailRecord& record, const AttackSpec& spec, std::size_t index) {
  EmailRecord out = record;
  const std::uint64_t key = record.id ? fnv1a64(*record.id) : static_cast<std::uint64_t>(index);
  out.subject = attack_with(record.subject, spec, mix_seed(spec.seed, mix_seed(key, 1)));
  std::string body = record.body_text ? *record.body_text : (record.body_html ? html_to_text(*record.body_html) : "");
  out.body_text = attack_with(body, spec, mix_seed(spec.seed, mix_seed(key, 2)));
  out.body_html.reset();
  return out;
}

json report_to_json(const AttackReport& r) {
  return json{{"clean_accuracy", r.clean_accuracy},
              {"attacked_accuracy", r.attacked_accuracy},
              {"delta", r.delta},
              {"samples", r.samples}};
}

AttackReport accuracy_under_attack(const std::vector<EmailRecord>& records, const AttackSpec& spec, double threshold,
                                   const std::function<double(const EmailRecord&)>& score, std::size_t threads) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  spec.validate();
  std::vector<std::size_t> malicious;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].label == 1) malicious.push_back(i);
  }
  std::vector<std::uint8_t> clean_hit(malicious.size()), attacked_hit(malicious.size());
  parallel_for(malicious.size(), threads, [&](std::size_t k) {
    const EmailRecord& r = records[malicious[k]];
    clean_hit[k] = score(r) >= threshold;
    attacked_hit[k] = score(attack_record(r, spec, malicious[k])) >= threshold;
  });
  AttackReport report;
  report.samples = malicious.size();
  if (malicious.empty()) return report;
  std::size_t clean = 0, attacked = 0;
  for (std::size_t k = 0; k < malicious.size(); ++k) {
    clean += clean_hit[k];
    attacked += attacked_hit[k];
  }
  const double n = static_cast<double>(malicious.size());
  report.clean_accuracy = static_cast<double>(clean) / n;
  report.attacked_accuracy = static_cast<double>(attacked) / n;
  report.delta = report.clean_accuracy - report.attacked_accuracy;
  return report;
}

}  // namespace catbert
