// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "catbert/mail.hpp"
#include "catbert/util.hpp"

namespace catbert {

namespace {

constexpr std::array<std::string_view, 47> kBlockTags = {
    "address", "article", "aside", "blockquote", "body",   "br",     "caption", "center",   "dd",     "div",
    "dl",      "dt",      "fieldset", "figcaption", "figure", "footer", "form",    "h1",       "h2",     "h3",
    "h4",      "h5",      "h6",    "head",       "header", "hr",     "html",    "li",       "main",   "nav",
    "ol",      "p",       "pre",   "section",    "table",  "tbody",  "td",      "tfoot",    "th",     "thead",
    "title",   "tr",      "ul",    "option",     "textarea", "iframe", "frame"};

constexpr std::array<std::string_view, 4> kSkipContentTags = {"script", "style", "noscript", "template"};

struct NamedEntity {
  std::string_view name;
  std::string_view text;
};

constexpr std::array<NamedEntity, 30> kEntities = {{
    {"amp", "&"},         {"lt", "<"},          {"gt", ">"},          {"quot", "\""},       {"apos", "'"},
    {"nbsp", " "},        {"copy", "©"},   {"reg", "®"},    {"trade", "™"},  {"hellip", "…"},
    {"ndash", "–"},  {"mdash", "—"},  {"lsquo", "‘"},  {"rsquo", "’"},  {"ldquo", "“"},
    {"rdquo", "”"},  {"euro", "€"},   {"pound", "£"},  {"yen", "¥"},    {"cent", "¢"},
    {"sect", "§"},   {"deg", "°"},    {"middot", "·"}, {"bull", "•"},   {"times", "×"},
    {"divide", "÷"}, {"laquo", "«"},  {"raquo", "»"},  {"zwnj", ""},         {"zwj", ""},
}};

bool contains(std::span<const std::string_view> set, std::string_view name) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  // Zero-width characters are a common keyword-splitting trick.
  if (cp == 0x200B || cp == 0x200C || cp == 0x200D || cp == 0xFEFF) return;
  if (cp == 0xA0) {
    out.push_back(' ');
    return;
  }
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Decodes the entity starting at s[i] == '&'. Returns bytes consumed, or 0
// if the text is not a recognised entity (the '&' is then literal).
std::size_t decode_entity(std::string_view s, std::size_t i, std::string& out) {
  const std::size_t semi = s.find(';', i + 1);
  if (semi == std::string_view::npos || semi - i > 12 || semi == i + 1) return 0;
  const std::string_view body = s.substr(i + 1, semi - i - 1);
  if (body[0] == '#') {
    std::uint32_t cp = 0;
    const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
    const std::string_view digits = body.substr(hex ? 2 : 1);
    if (digits.empty()) return 0;
    for (char c : digits) {
      int v;
      if (c >= '0' && c <= '9') {
        v = c - '0';
      } else if (hex && c >= 'a' && c <= 'f') {
        v = c - 'a' + 10;
      } else if (hex && c >= 'A' && c <= 'F') {
        v = c - 'A' + 10;
      } else {
        return 0;
      }
      cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
      if (cp > 0x10FFFF) cp = 0x110000;
    }
    append_utf8(out, cp);
    return semi - i + 1;
  }
  for (const auto& e : kEntities) {
    if (e.name == body) {
      out += e.text;
      return semi - i + 1;
    }
  }
  return 0;
}

bool starts_with_ci(std::string_view s, std::size_t at, std::string_view prefix) {
  if (at + prefix.size() > s.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(s[at + k])) != prefix[k]) return false;
  }
  return true;
}

// Index just past the '>' closing the tag that opens at `from`, honouring
// quoted attribute values. npos if the tag never closes.
std::size_t tag_end(std::string_view s, std::size_t from) {
  char quote = 0;
  for (std::size_t j = from; j < s.size(); ++j) {
    const char ch = s[j];
    if (quote) {
      if (ch == quote) quote = 0;
    } else if (ch == '"' || ch == '\'') {
      quote = ch;
    } else if (ch == '>') {
      return j + 1;
    }
  }
  return std::string_view::npos;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string html_to_text(std::string_view s) {
  std::string raw;
  raw.reserve(s.size());
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const char c = s[i];
    if (c == '&') {
      const std::size_t used = decode_entity(s, i, raw);
      if (used) {
        i += used;
      } else {
        raw.push_back('&');
        ++i;
      }
      continue;
    }
    if (c != '<') {
      raw.push_back(c);
      ++i;
      continue;
    }
    if (s.compare(i, 4, "<!--") == 0) {
      const std::size_t close = s.find("-->", i + 4);
      i = close == std::string_view::npos ? n : close + 3;
      continue;
    }
    std::size_t k = i + 1;
    const bool closing = k < n && s[k] == '/';
    if (closing) ++k;
    if (k < n && (s[k] == '!' || s[k] == '?')) {
      const std::size_t end = tag_end(s, k);
      i = end == std::string_view::npos ? n : end;
      continue;
    }
    if (k >= n || !std::isalpha(static_cast<unsigned char>(s[k]))) {
      raw.push_back('<');
      ++i;
      continue;
    }
    std::string name;
    while (k < n && std::isalnum(static_cast<unsigned char>(s[k]))) {
      name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[k]))));
      ++k;
    }
    const std::size_t end = tag_end(s, k);
    if (end == std::string_view::npos) break;  // unclosed tag swallows the rest
    i = end;
    const bool self_closing = end >= 2 && s[end - 2] == '/';
    if (!closing && !self_closing && contains(kSkipContentTags, name)) {
      const std::string close_tag = "</" + name;
      std::size_t at = i;
      while (at < n && !starts_with_ci(s, at, close_tag)) ++at;
      if (at >= n) {
        i = n;
      } else {
        const std::size_t close_end = tag_end(s, at + close_tag.size());
        i = close_end == std::string_view::npos ? n : close_end;
      }
      continue;
    }
    if (contains(kBlockTags, name)) raw.push_back(' ');
  }
  return collapse_whitespace(raw);
}

}  // namespace catbert
