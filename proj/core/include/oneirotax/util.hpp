#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oneirotax {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::string_view data);
std::string to_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view data);
std::string file_sha256_hex(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);
/// Splits one CSV record (no embedded newlines) honoring double quotes.
std::vector<std::string> csv_split(std::string_view line);

/// Shortest round-trip representation of a double ("%.17g" trimmed).
std::string format_double(double v);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is run
/// exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

/// Process-wide default worker count (set by the CLI's --threads).
std::size_t default_threads();
void set_default_threads(std::size_t n);

}  // namespace oneirotax
