#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deva::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest hmac_sha256(std::string_view key, std::string_view message);
Digest sha256(std::string_view message);

/// Constant-time equality.
bool equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// First eight digest bytes, little-endian.
std::uint64_t to_u64(const Digest& d);

/// Cryptographically random bytes (OpenSSL DRBG).
std::vector<std::uint8_t> random_bytes(std::size_t n);
std::uint64_t random_u64();

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);  // throws std::invalid_argument

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);  // throws std::invalid_argument

}  // namespace deva::crypto
