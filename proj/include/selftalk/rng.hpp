#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace selftalk {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-identical across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : state_) w = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + int(below(uint64_t(hi - lo + 1)));
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; draws two uniforms per call, returns one deviate.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
  std::array<uint64_t, 4> state_{};
};

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent stream id from a master seed, a purpose tag and up
// to three indices. Used everywhere randomness is needed so that runs are a
// pure function of (config, seed).
inline uint64_t mix_seed(uint64_t master, std::string_view tag, uint64_t a = 0,
                         uint64_t b = 0, uint64_t c = 0) {
  uint64_t x = master;
  uint64_t h = Rng::splitmix64(x);
  x = h ^ hash_str(tag);
  h = Rng::splitmix64(x);
  x = h ^ a;
  h = Rng::splitmix64(x);
  x = h ^ b;
  h = Rng::splitmix64(x);
  x = h ^ c;
  return Rng::splitmix64(x);
}

inline Rng derive_rng(uint64_t master, std::string_view tag, uint64_t a = 0,
                      uint64_t b = 0, uint64_t c = 0) {
  return Rng(mix_seed(master, tag, a, b, c));
}

}  // namespace selftalk
