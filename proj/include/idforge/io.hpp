#pragma once

#include "idforge/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace idforge {

std::string read_text_file(const std::filesystem::path& path);

// Writes via a temp file + rename so readers never observe partial content.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

// Doubles formatted with %.17g: enough digits to round-trip bit-exactly, so
// identical runs produce byte-identical files.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string csv_to_string(const CsvTable& table);
CsvTable csv_from_string(const std::string& text);

std::uint64_t fnv1a(std::string_view data);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

} // namespace idforge
