// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace catbert {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on a usage error, 2 on a runtime error. Data goes to `out`,
/// diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

/// Record of one CLI run, written next to its outputs.
class RunManifest {
 public:
  RunManifest(std::string subcommand, std::uint64_t seed);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  /// Checksums every input and output (directories file by file) and writes
  /// the manifest. duration_seconds is the only timing field.
  void write(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;

 private:
  std::string subcommand_;
  std::uint64_t seed_;
  nlohmann::json config_ = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace catbert
