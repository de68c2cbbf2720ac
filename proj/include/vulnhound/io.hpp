#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace vulnhound::io {

// Throws DataError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

// Creates parent directories; writes through a temporary file and renames.
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace vulnhound::io
