// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace catbert {

/// 64-bit FNV-1a over raw bytes. Stable across platforms; used for checksums
/// and for deriving per-name RNG streams.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; turns correlated seeds into independent ones.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0);

/// Hex-encoded FNV-1a checksum of a file's contents.
std::string file_checksum(const std::filesystem::path& path);

/// Parses an ISO-8601 timestamp ("2021-03-04", "2021-03-04T05:06:07",
/// optional fractional seconds, optional "Z" or "+hh:mm") to seconds since
/// the Unix epoch. Returns nullopt on malformed input.
std::optional<double> parse_iso8601(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results by index so output order
/// never depends on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Configures the stderr logger. Level comes from CATBERT_LOG_LEVEL
/// (trace|debug|info|warn|error|off), default "warn".
void init_logging();

}  // namespace catbert
