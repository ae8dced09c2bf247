#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace segmem {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string file_sha256_hex(const std::filesystem::path& path);

}  // namespace segmem
