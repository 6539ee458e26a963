#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fedrec {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a 64-bit. Used for token bucketing, checkpoint digests and transcript
// keys, so it must never change.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = kFnvOffset) {
  for (const char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv1a64_doubles(std::span<const double> values,
                              std::uint64_t h = kFnvOffset);

std::string to_hex(std::uint64_t value);

}  // namespace fedrec
