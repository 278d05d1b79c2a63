// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/mail.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

using nlohmann::json;

std::optional<double> EmailRecord::first_seen_seconds() const {
  if (!first_seen) return std::nullopt;
  return parse_iso8601(*first_seen);
}

std::array<float, ContextFeatures::kDim> ContextFeatures::to_vector() const {
  return {static_cast<float>(internal), static_cast<float>(external),
          static_cast<float>(std::log1p(static_cast<double>(n_recipients))),
          static_cast<float>(std::log1p(static_cast<double>(n_cc)))};
}

std::optional<std::string> address_domain(std::string_view address) {
  std::string text = trim(address);
  const auto open = text.rfind('<');
  if (open != std::string::npos) {
    const auto close = text.find('>', open);
    if (close == std::string::npos) return std::nullopt;
    text = trim(std::string_view(text).substr(open + 1, close - open - 1));
  }
  const auto at = text.rfind('@');
  if (at == std::string::npos || at == 0) return std::nullopt;
  std::string domain = to_lower_ascii(std::string_view(text).substr(at + 1));
  while (!domain.empty() && domain.back() == '.') domain.pop_back();
  if (domain.empty()) return std::nullopt;
  for (char c : domain) {
    if (c == '@' || c == '<' || c == '>' || std::isspace(static_cast<unsigned char>(c))) return std::nullopt;
  }
  return domain;
}

ContextExtraction extract_context(const EmailRecord& record) {
  ContextExtraction out;
  out.features.n_recipients = record.to.size();
  out.features.n_cc = record.cc.size();

  const auto sender = address_domain(record.from);
  if (!sender) out.warnings.push_back("unparseable sender address '" + record.from + "'");

  bool any_recipient = false;
  bool all_same = true;
  auto visit = [&](const std::vector<std::string>& list, const char* field) {
    for (const auto& addr : list) {
      const auto domain = address_domain(addr);
      if (!domain) {
        out.warnings.push_back(std::string("unparseable ") + field + " address '" + addr + "'");
        all_same = false;
        continue;
      }
      any_recipient = true;
      if (!sender || *domain != *sender) all_same = false;
    }
  };
  visit(record.to, "to");
  visit(record.cc, "cc");
  if (!any_recipient) out.warnings.push_back("no parseable recipient");

  const bool internal = sender && any_recipient && all_same;
  out.features.internal = internal ? 1 : 0;
  out.features.external = internal ? 0 : 1;
  return out;
}

std::string build_content(const EmailRecord& record) {
  std::string out = record.subject;
  out.push_back(' ');
  if (record.body_text) {
    out += *record.body_text;
  } else if (record.body_html) {
    out += html_to_text(*record.body_html);
  }
  return out;
}

json record_to_json(const EmailRecord& r) {
  json j;
  if (r.id) j["id"] = *r.id;
  j["subject"] = r.subject;
  if (r.body_text) j["body_text"] = *r.body_text;
  if (r.body_html) j["body_html"] = *r.body_html;
  j["from"] = r.from;
  j["to"] = r.to;
  j["cc"] = r.cc;
  j["label"] = r.label;
  if (r.group) j["group"] = *r.group;
  j["weight"] = r.weight;
  if (r.first_seen) j["first_seen"] = *r.first_seen;
  return j;
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DatasetError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> address_list(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return {it->get<std::string>()};
  if (!it->is_array()) throw DatasetError(std::string("field '") + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw DatasetError(std::string("field '") + key + "' must be a list of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

EmailRecord record_from_json(const json& j) {
  if (!j.is_object()) throw DatasetError("record is not a JSON object");
  EmailRecord r;

  const auto label = j.find("label");
  if (label == j.end() || label->is_null()) throw DatasetError("missing label");
  if (!label->is_number_integer() || (label->get<long long>() != 0 && label->get<long long>() != 1)) {
    throw DatasetError("label must be 0 or 1, got " + label->dump());
  }
  r.label = label->get<int>();

  if (const auto id = j.find("id"); id != j.end() && !id->is_null()) {
    if (id->is_string()) {
      r.id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      r.id = std::to_string(id->get<long long>());
    } else {
      throw DatasetError("field 'id' must be a string or integer");
    }
  }
  r.subject = optional_string(j, "subject").value_or("");
  r.body_text = optional_string(j, "body_text");
  r.body_html = optional_string(j, "body_html");
  r.from = optional_string(j, "from").value_or("");
  r.to = address_list(j, "to");
  r.cc = address_list(j, "cc");
  r.group = optional_string(j, "group");

  if (const auto w = j.find("weight"); w != j.end() && !w->is_null()) {
    if (!w->is_number()) throw DatasetError("field 'weight' must be a number");
    r.weight = w->get<double>();
    if (!(r.weight > 0.0) || !std::isfinite(r.weight)) throw DatasetError("weight must be positive, got " + w->dump());
  }
  r.first_seen = optional_string(j, "first_seen");
  if (r.first_seen && !parse_iso8601(*r.first_seen)) {
    throw DatasetError("first_seen is not an ISO-8601 timestamp: '" + *r.first_seen + "'");
  }
  return r;
}

DatasetLoad load_dataset(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  DatasetLoad out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    try {
      out.records.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      std::string message = e.what();
      if (dynamic_cast<const json::exception*>(&e)) message = "invalid JSON: " + message;
      if (strict) throw DatasetError(path.string() + ":" + std::to_string(number) + ": " + message);
      out.errors.push_back({number, std::move(message)});
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<EmailRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write dataset " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
  if (!out) throw DatasetError("write failed for " + path.string());
}

}  // namespace catbert
