#pragma once

#include <cstdint>
#include <string_view>

namespace poolsearch {

// splitmix64 step; the single PRNG primitive used everywhere.
inline std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic uniform stream. All sampling in the library draws doubles
// from this class, so a (seed, call order) pair fully determines a run.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept { return splitmix64_next(state_); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double next_double() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Lemire multiply-shift; n must be > 0.
  std::uint64_t next_below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

// Substream derivation: fold tags and integers into the master seed through
// splitmix64 so adding one substream never perturbs another. The exact
// formula is part of the reproducibility contract (see README).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) noexcept {
  std::uint64_t s = master;
  s ^= fnv1a(tag);
  (void)splitmix64_next(s);
  s ^= a;
  (void)splitmix64_next(s);
  s ^= b;
  (void)splitmix64_next(s);
  s ^= c;
  return splitmix64_next(s);
}

}  // namespace poolsearch
