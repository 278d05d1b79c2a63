// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "catbert/attack.hpp"
#include "catbert/mail.hpp"
#include "catbert/tokenizer.hpp"

namespace catbert {

/// Token whose presence marks a message malicious in the generated corpus.
inline constexpr const char* kPlantedWord = "wiretransfer";

struct SyntheticOptions {
  std::size_t records = 2000;
  double malicious_fraction = 0.1;
  /// Off: malicious iff the planted word is present (malicious mail is
  /// always external, benign mail is internal half the time).
  /// On: the planted word appears in a larger share of mail and only the
  /// externally sent copies are malicious, so the label needs the headers.
  bool context_dependent = false;
  /// Share of malicious records tagged "bec" (the rest are "english").
  double bec_fraction = 0.25;
  std::uint64_t seed = 0;
};

/// Records in first-seen order with ids "syn-000000", ...
std::vector<EmailRecord> synthetic_corpus(const SyntheticOptions& options);

/// Sub-word vocabulary covering the generated text: every filler word
/// whole, single characters and "##" characters so no ASCII word falls to
/// [UNK], and a few compound pieces. The planted word is not a single
/// token; it splits as "wire" "##transfer".
Vocabulary synthetic_vocabulary();

/// Synonyms for the planted word and for common filler words.
SynonymTable synthetic_synonyms();

/// Seconds since the epoch to "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(std::int64_t seconds);

}  // namespace catbert
