#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace cog {

// SHA-256 hex digest.
std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(const std::string& text);

}  // namespace cog
