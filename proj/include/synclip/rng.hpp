#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace synclip {

// SplitMix64; used to expand seeds and to derive child streams.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Splittable counter-friendly generator: xoshiro256** seeded via SplitMix64.
// All distributions are implemented here (not via <random>) so that streams
// are bit-reproducible across standard libraries and platforms.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Derive an independent child stream. Children of distinct tags (or of
  // distinct parents) do not overlap in practice; this is the only stream
  // split mechanism used anywhere in the artifact.
  Rng split(uint64_t tag) const {
    uint64_t sm = s_[0] ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    sm ^= s_[1] + 0x632be59bd9b4e019ULL;
    Rng child(0);
    for (auto& w : child.s_) w = splitmix64(sm);
    return child;
  }
  Rng split(std::string_view tag) const { return split(fnv1a64(tag)); }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0,1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased-enough modulo-free draw from [0,n).
  int uniform_int(int n) {
    return n <= 1 ? 0 : int((__uint128_t(next_u64()) * __uint128_t(n)) >> 64);
  }

  // Box-Muller without caching so the state stays a pure function of draw count.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = int(v.size()) - 1; i > 0; --i) std::swap(v[size_t(i)], v[size_t(uniform_int(i + 1))]);
  }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> s_{};
};

}  // namespace synclip
