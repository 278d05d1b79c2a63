// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace catbert {

/// One email as it arrives from the feed, already split into fields.
struct EmailRecord {
  std::optional<std::string> id;
  std::string subject;
  std::optional<std::string> body_text;
  std::optional<std::string> body_html;
  std::string from;
  std::vector<std::string> to;
  std::vector<std::string> cc;
  int label = 0;
  std::optional<std::string> group;  // bec | english | non_english | other tags
  double weight = 1.0;
  std::optional<std::string> first_seen;  // ISO-8601, kept verbatim

  /// Seconds since the epoch, or nullopt when absent.
  std::optional<double> first_seen_seconds() const;

  bool operator==(const EmailRecord&) const = default;
};

/// Header-derived context: internal/external communication flags plus the
/// recipient and CC counts.
struct ContextFeatures {
  int internal = 0;
  int external = 1;
  std::size_t n_recipients = 0;
  std::size_t n_cc = 0;

  static constexpr std::size_t kDim = 4;
  /// Model input: {internal, external, log(1 + n_recipients), log(1 + n_cc)}.
  std::array<float, kDim> to_vector() const;

  bool operator==(const ContextFeatures&) const = default;
};

struct ContextExtraction {
  ContextFeatures features;
  std::vector<std::string> warnings;
};

/// Lowercased domain after the last '@', trailing dots removed. Accepts
/// "Name <user@host>" forms. nullopt if the address does not parse.
std::optional<std::string> address_domain(std::string_view address);

/// internal = 1 iff the sender's domain equals the domain of every To and CC
/// recipient; external = 1 otherwise. Never throws: unparseable addresses
/// add a warning and fall back to external.
ContextExtraction extract_context(const EmailRecord& record);

/// Strips tags, drops script/style/comments, decodes common entities,
/// turns block-level tags into spaces and collapses whitespace. Inline
/// tags vanish without a space, so "<b>p</b>ay" reads "pay".
std::string html_to_text(std::string_view html);

/// subject + " " + (body_text if present, else html_to_text(body_html)).
std::string build_content(const EmailRecord& record);

nlohmann::json record_to_json(const EmailRecord& record);
/// Throws DatasetError describing the first invalid field.
EmailRecord record_from_json(const nlohmann::json& j);

struct DatasetIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct DatasetLoad {
  std::vector<EmailRecord> records;
  std::vector<DatasetIssue> errors;
};

/// Reads JSON Lines. Blank lines are skipped. Malformed lines are collected
/// in `errors`; with strict=true the first one throws DatasetError.
DatasetLoad load_dataset(const std::filesystem::path& path, bool strict = false);
void write_dataset(const std::filesystem::path& path, const std::vector<EmailRecord>& records);

}  // namespace catbert
