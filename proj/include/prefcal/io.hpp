#ifndef PREFCAL_IO_HPP
#define PREFCAL_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace prefcal::io {

// 17 significant digits, enough to round-trip any double.
std::string format_double(double value);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace prefcal::io

#endif  // PREFCAL_IO_HPP
