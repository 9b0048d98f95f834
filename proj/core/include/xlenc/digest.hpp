#pragma once

#include <span>
#include <string>
#include <string_view>

namespace xlenc {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const unsigned char> bytes);

}  // namespace xlenc
