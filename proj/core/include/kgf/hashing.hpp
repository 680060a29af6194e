#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace kgf {

// Hex-encoded SHA-256. Used for request hashes, cache keys and config
// provenance stamps.
std::string sha256_hex(std::string_view data);

// Short (16-hex-char) prefix of the SHA-256; enough for filenames.
std::string short_hash(std::string_view data);

// FNV-1a, for cheap in-process hashing (stub embedder buckets, seed mixing).
std::uint64_t fnv1a64(std::string_view data);

// Deterministic combiner for deriving per-instance RNG seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

}  // namespace kgf
