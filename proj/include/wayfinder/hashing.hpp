#pragma once

#include <string>
#include <string_view>

namespace wayfinder {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// `bytes` bytes from the system CSPRNG, hex encoded.
std::string random_hex(std::size_t bytes);

std::string read_file(const std::string& path);

/// Writes via a temporary sibling and rename, so readers never see a
/// partial file.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace wayfinder
