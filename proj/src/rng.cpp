#include "fedrec/rng.hpp"

#include <bit>
#include <cstdio>
#include <unordered_set>

#include "fedrec/hash.hpp"

namespace fedrec {

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  // Lemire-style rejection on the low range to stay unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % n;
}

std::vector<std::uint64_t> Rng::sample_without_replacement(
    std::uint64_t n, std::uint64_t count) {
  std::vector<std::uint64_t> out;
  out.reserve(count);
  if (count * 4 >= n) {
    // Dense: partial Fisher-Yates over the full range.
    std::vector<std::uint64_t> pool(n);
    for (std::uint64_t i = 0; i < n; ++i) pool[i] = i;
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto j = i + uniform_index(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  while (out.size() < count) {
    const auto v = uniform_index(n);
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL));
}

std::uint64_t fnv1a64_doubles(std::span<const double> values,
                              std::uint64_t h) {
  for (const double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= bits & 0xffU;
      h *= kFnvPrime;
      bits >>= 8;
    }
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace fedrec
