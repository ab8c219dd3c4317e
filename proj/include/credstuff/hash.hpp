#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "credstuff/bytes.hpp"

namespace credstuff {

using Key128 = std::array<std::uint8_t, 16>;
using Digest32 = std::array<std::uint8_t, 32>;

// SipHash-2-4: 64-bit keyed hash used for cuckoo bucket addressing and
// fingerprint derivation.  Keyed per deployment so bucket patterns do not
// correlate across unrelated filters.
std::uint64_t siphash24(const Key128& key, ByteView data);

Digest32 sha256(ByteView data);
Digest32 hmac_sha256(ByteView key, ByteView data);

// scrypt with explicit cost parameters; memory-hard map from (salt, password)
// to a 32-byte element.
struct ScryptParams {
  std::uint64_t n = 1 << 14;
  std::uint32_t r = 8;
  std::uint32_t p = 1;
};

Digest32 scrypt32(ByteView salt, std::string_view password, const ScryptParams& params);

}  // namespace credstuff
