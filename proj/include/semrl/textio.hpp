#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace semrl::textio {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);

std::string_view trim(std::string_view s);
/// Splits on `sep`, trimming each field. Empty input yields no fields.
std::vector<std::string_view> split(std::string_view s, char sep);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// FNV-1a over the bytes; used for file fingerprints in manifests.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Named array block used by checkpoints: `<name> <count>` then the values,
// eight per line.
void write_array(std::ostream& out, std::string_view name, const std::vector<double>& values);
std::vector<double> read_array(std::istream& in, std::string_view name);

}  // namespace semrl::textio
