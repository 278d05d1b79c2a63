// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace catbert {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kContinuationPrefix = "##";

/// WordPiece vocabulary. A token's id is its 0-based position in the list.
class Vocabulary {
 public:
  /// One token per line, UTF-8. Throws VocabularyError on duplicate tokens
  /// (naming both 1-based line numbers), empty lines, or missing specials.
  static Vocabulary load(const std::filesystem::path& path);
  /// Same validation as load(); "line" numbers are positions + 1.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::int32_t> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  const std::string& token(std::int32_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::int32_t pad_id() const { return pad_; }
  std::int32_t unk_id() const { return unk_; }
  std::int32_t cls_id() const { return cls_; }
  std::int32_t sep_id() const { return sep_; }
  bool is_special(std::int32_t id) const { return id == pad_ || id == unk_ || id == cls_ || id == sep_; }

  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::int32_t pad_ = -1, unk_ = -1, cls_ = -1, sep_ = -1;
};

/// Which content tokens survive when [CLS] content [SEP] exceeds max_len.
enum class Truncation {
  keep_head,  // keep the first max_len - 2 content tokens
  keep_tail,  // keep the last max_len - 2 content tokens
};

Truncation parse_truncation(std::string_view text);  // "head" | "tail"
std::string_view to_string(Truncation t);

struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> attention_mask;
  /// Content tokens (excluding [CLS]/[SEP]) before truncation.
  std::size_t original_length = 0;

  std::size_t length() const { return ids.size(); }
  std::size_t unmasked() const;
  /// Copy without trailing padding.
  TokenSequence trimmed() const;
};

/// Lowercases ASCII, drops control characters, splits on whitespace and
/// emits each ASCII punctuation character as its own token.
std::vector<std::string> basic_tokenize(std::string_view text);

/// Greedy longest-match-first WordPiece over basic_tokenize(text). A word
/// with any unmatched remainder becomes a single [UNK].
std::vector<std::string> wordpiece(std::string_view text, const Vocabulary& vocab);

/// [CLS] wordpiece(text) [SEP], truncated per `truncation`, padded with
/// [PAD] to exactly max_len. Throws ContractError if max_len < 3.
TokenSequence encode_text(std::string_view text, const Vocabulary& vocab, std::size_t max_len,
                          Truncation truncation = Truncation::keep_head);

/// encode_text(subject + " " + body, ...)
TokenSequence encode(std::string_view subject, std::string_view body, const Vocabulary& vocab, std::size_t max_len,
                     Truncation truncation = Truncation::keep_head);

/// Token strings for ids, optionally skipping special tokens.
std::vector<std::string> decode(std::span<const std::int32_t> ids, const Vocabulary& vocab, bool skip_special = true);

/// Glues "##" continuation pieces back onto the preceding piece.
std::vector<std::string> merge_wordpieces(const std::vector<std::string>& pieces);

}  // namespace catbert
