#ifndef CAMOBREW_RNG_HPP
#define CAMOBREW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace camobrew {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed tag: either a numeric component (trial index, epoch, id) or a
/// stage name.
struct SeedTag {
  SeedTag(std::uint64_t v) : value(v) {}  // NOLINT
  SeedTag(int v) : value(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))) {}  // NOLINT
  SeedTag(long v) : value(static_cast<std::uint64_t>(v)) {}  // NOLINT
  SeedTag(unsigned v) : value(v) {}  // NOLINT
  SeedTag(const char* s) : value(fnv1a(s)) {}  // NOLINT
  SeedTag(std::string_view s) : value(fnv1a(s)) {}  // NOLINT
  std::uint64_t value;
};

/// Deterministic child seed from a parent seed and a path of tags.
inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<SeedTag> tags) {
  std::uint64_t h = splitmix64(parent);
  for (const auto& t : tags) h = splitmix64(h ^ splitmix64(t.value + 0x632be59bd9b4e019ULL));
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Multiply-shift range reduction keeps draws identical across standard
// library implementations.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace camobrew

#endif  // CAMOBREW_RNG_HPP
