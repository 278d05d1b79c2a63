// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "catbert/mail.hpp"

namespace catbert {

enum class AttackKind { synonym, typo, homoglyph };

AttackKind parse_attack_kind(std::string_view text);
std::string_view to_string(AttackKind kind);

using SynonymTable = std::map<std::string, std::vector<std::string>>;
/// ASCII character -> UTF-8 lookalike.
using HomoglyphMap = std::map<char, std::string>;

/// a->@, o->0, e->3, i->1, l->|, s->$
HomoglyphMap default_homoglyphs();

struct AttackSpec {
  AttackKind kind = AttackKind::typo;
  double rate = 0.5;  // share of eligible words perturbed
  std::uint64_t seed = 0;
  SynonymTable synonyms;
  HomoglyphMap homoglyphs = default_homoglyphs();

  void validate() const;
};

SynonymTable synonyms_from_json(const nlohmann::json& j);
HomoglyphMap homoglyphs_from_json(const nlohmann::json& j);

/// Perturbs whitespace-separated words; whitespace is kept as is. A word is
/// eligible when the attack can change it: synonym needs a table entry for
/// its lowercased core (leading/trailing punctuation stripped), typo needs
/// an ASCII-letter core of two or more letters, homoglyph needs a mappable
/// character. Each eligible word is selected by a seeded draw below `rate`.
/// Typos apply one edit: swap two adjacent differing letters, drop one, or
/// double one.
std::string attack_text(std::string_view text, const AttackSpec& spec);

/// Attacks the subject and the body text. An HTML-only body is converted
/// to text first, so the result has body_text and no body_html. Headers are
/// untouched. The record's id and the spec seed pick the random stream.
EmailRecord attack_record(const EmailRecord& record, const AttackSpec& spec, std::size_t index);

struct AttackReport {
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double delta = 0.0;  // clean - attacked
  std::size_t samples = 0;
};

nlohmann::json report_to_json(const AttackReport& report);

/// Scores the malicious records before and after attack_record and reports
/// the share scored at or above `threshold`. `score` must be a pure function
/// of the record.
AttackReport accuracy_under_attack(const std::vector<EmailRecord>& records, const AttackSpec& spec, double threshold,
                                   const std::function<double(const EmailRecord&)>& score, std::size_t threads = 1);

}  // namespace catbert
