// SPDX-License-Identifier: Apache-2.0
// Internal text I/O helpers: strict number parsing, shortest round-trip
// formatting, tiny CSV reader/writer, canonical JSON dump, FNV-1a hashing.
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bhm::textio {

// Shortest representation that round-trips exactly; used for every double
// we emit (CSV and JSON alike) so reruns are byte-identical.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row

  // Column index by name; -1 when absent.
  int column(std::string_view name) const;
};

// Minimal CSV dialect: comma separator, no quoting (none of our formats
// needs it), '\n' records, lines starting with '#' skipped, trailing
// whitespace/CR trimmed. Throws errc::io / errc::format.
CsvTable read_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// nlohmann dump for our canonical insertion-ordered documents. Doubles come
// out in shortest round-trip form from nlohmann itself; this wrapper just
// pins the indent style in one place.
std::string dump_json(const nlohmann::ordered_json& j);

std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::string_view s);  // 16 lowercase hex digits

} // namespace bhm::textio
