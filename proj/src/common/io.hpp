#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace crg {

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace crg
