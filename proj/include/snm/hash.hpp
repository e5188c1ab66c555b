#pragma once

#include <bit>
#include <cstdint>
#include <string_view>

namespace snm {

// 64-bit FNV-1a.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// Identifier written into adjustment files so that a model trained under one
// hashing scheme is never silently evaluated under another.
inline constexpr std::string_view kHashSchemeName = "fnv1a64/rotl17-xor-mix/v1";

constexpr std::uint64_t fnv1a_update(std::uint64_t h, std::string_view bytes) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

/// String fingerprint.
constexpr std::uint64_t fingerprint(std::string_view s) noexcept {
  return fnv1a_update(kFnvOffset, s);
}

/// Hash of an integer through its 8-byte little-endian form, continuing from
/// `seed` (pass kFnvOffset for a plain integer hash).
constexpr std::uint64_t hash_integer(std::int64_t value,
                                     std::uint64_t seed = kFnvOffset) noexcept {
  auto u = static_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    seed ^= (u >> (8 * i)) & 0xffU;
    seed *= kFnvPrime;
  }
  return seed;
}

/// Order-sensitive combination of two hashes; used for conjoined meta-features.
constexpr std::uint64_t conjoin(std::uint64_t first, std::uint64_t second) noexcept {
  std::uint64_t h = std::rotl(first, 17) ^ second;
  h ^= h >> 32;
  h *= 0x9e3779b97f4a7c15ULL;
  h ^= h >> 29;
  return h;
}

constexpr std::uint64_t scheme_id() noexcept { return fingerprint(kHashSchemeName); }

}  // namespace snm
