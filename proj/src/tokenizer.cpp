// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include "catbert/error.hpp"

namespace catbert {

namespace {

constexpr std::size_t kMaxWordBytes = 100;

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Byte offset of the code point boundary strictly before `pos`.
std::size_t prev_boundary(std::string_view s, std::size_t pos) {
  do {
    --pos;
  } while (pos > 0 && is_utf8_continuation(static_cast<unsigned char>(s[pos])));
  return pos;
}

}  // namespace

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    const std::string& tok = v.tokens_[i];
    if (tok.empty()) throw VocabularyError("vocabulary: empty token on line " + std::to_string(i + 1));
    auto [it, inserted] = v.index_.emplace(tok, static_cast<std::int32_t>(i));
    if (!inserted) {
      throw VocabularyError("vocabulary: duplicate token '" + tok + "' on lines " + std::to_string(it->second + 1) +
                            " and " + std::to_string(i + 1));
    }
  }
  std::vector<std::string> missing;
  auto special = [&](std::string_view name, std::int32_t& slot) {
    auto id = v.find(name);
    if (id) {
      slot = *id;
    } else {
      missing.emplace_back(name);
    }
  };
  special(kPadToken, v.pad_);
  special(kUnkToken, v.unk_);
  special(kClsToken, v.cls_);
  special(kSepToken, v.sep_);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw VocabularyError("vocabulary: missing special tokens: " + list);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabularyError("vocabulary: cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VocabularyError("vocabulary: cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary: id " + std::to_string(id) + " outside [0, " + std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Truncation parse_truncation(std::string_view text) {
  if (text == "head") return Truncation::keep_head;
  if (text == "tail") return Truncation::keep_tail;
  throw ConfigError("truncation must be 'head' or 'tail', got '" + std::string(text) + "'");
}

std::string_view to_string(Truncation t) { return t == Truncation::keep_head ? "head" : "tail"; }

std::size_t TokenSequence::unmasked() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), std::uint8_t{1}));
}

TokenSequence TokenSequence::trimmed() const {
  std::size_t n = attention_mask.size();
  while (n > 0 && attention_mask[n - 1] == 0) --n;
  TokenSequence out;
  out.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
  out.attention_mask.assign(attention_mask.begin(), attention_mask.begin() + static_cast<std::ptrdiff_t>(n));
  out.original_length = original_length;
  return out;
}

std::vector<std::string> basic_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (c < 0x20 || c == 0x7f) {
      continue;
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

std::vector<std::string> wordpiece(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const std::string& word : basic_tokenize(text)) {
    if (word.size() > kMaxWordBytes) {
      out.emplace_back(kUnkToken);
      continue;
    }
    std::vector<std::string> pieces;
    std::size_t start = 0;
    bool bad = false;
    while (start < word.size()) {
      std::size_t end = word.size();
      std::string match;
      while (start < end) {
        std::string candidate = start > 0 ? std::string(kContinuationPrefix) : std::string();
        candidate.append(word, start, end - start);
        if (vocab.contains(candidate)) {
          match = std::move(candidate);
          break;
        }
        end = prev_boundary(word, end);
      }
      if (match.empty()) {
        bad = true;
        break;
      }
      pieces.push_back(std::move(match));
      start = end;
    }
    if (bad) {
      out.emplace_back(kUnkToken);
    } else {
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
  }
  return out;
}

TokenSequence encode_text(std::string_view text, const Vocabulary& vocab, std::size_t max_len,
                          Truncation truncation) {
  if (max_len < 3) throw ContractError("encode: max_len must be at least 3, got " + std::to_string(max_len));
  const std::vector<std::string> pieces = wordpiece(text, vocab);
  const std::size_t keep = std::min(pieces.size(), max_len - 2);
  const std::size_t first = truncation == Truncation::keep_head ? 0 : pieces.size() - keep;

  TokenSequence seq;
  seq.original_length = pieces.size();
  seq.ids.reserve(max_len);
  seq.ids.push_back(vocab.cls_id());
  for (std::size_t i = first; i < first + keep; ++i) seq.ids.push_back(*vocab.find(pieces[i]));
  seq.ids.push_back(vocab.sep_id());
  seq.attention_mask.assign(seq.ids.size(), 1);
  seq.ids.resize(max_len, vocab.pad_id());
  seq.attention_mask.resize(max_len, 0);
  return seq;
}

TokenSequence encode(std::string_view subject, std::string_view body, const Vocabulary& vocab, std::size_t max_len,
                     Truncation truncation) {
  std::string text;
  text.reserve(subject.size() + body.size() + 1);
  text.append(subject).append(" ").append(body);
  return encode_text(text, vocab, max_len, truncation);
}

std::vector<std::string> decode(std::span<const std::int32_t> ids, const Vocabulary& vocab, bool skip_special) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (skip_special && vocab.is_special(id) && id != vocab.unk_id()) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<std::string> merge_wordpieces(const std::vector<std::string>& pieces) {
  std::vector<std::string> words;
  for (const auto& p : pieces) {
    if (p.starts_with(kContinuationPrefix) && p.size() > kContinuationPrefix.size() && !words.empty()) {
      words.back() += p.substr(kContinuationPrefix.size());
    } else {
      words.push_back(p);
    }
  }
  return words;
}

}  // namespace catbert
