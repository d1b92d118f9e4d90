#pragma once
// Small checksum helpers: FNV-1a for parameter-partition fingerprints and
// CRC-32 for checkpoint integrity.

#include <cstddef>
#include <cstdint>

namespace dalm {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr uint64_t kFnvPrime  = 0x100000001b3ull;

inline uint64_t fnv1a64(const void * data, size_t n, uint64_t h = kFnvOffset) {
    const unsigned char * p = static_cast<const unsigned char *>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

uint32_t crc32(const void * data, size_t n, uint32_t crc = 0);

} // namespace dalm
