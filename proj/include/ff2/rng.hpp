#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ff2 {

// Seeded pseudo-random generator used for all initialization, dropout and
// shuffling. The algorithm is pinned so that a seed reproduces the same
// draw sequence on every platform:
//
//   state    xoshiro256** (Blackman & Vigna), seeded by four outputs of
//            splitmix64 applied to the user seed
//   uniform  (next_u64() >> 11) * 2^-53, in [0, 1)
//   normal   Box-Muller, two uniforms per draw (no cached spare):
//            u1 = ((next_u64() >> 11) + 1) * 2^-53   in (0, 1]
//            u2 = (next_u64() >> 11) * 2^-53         in [0, 1)
//            value = mean + std * sqrt(-2 ln u1) * cos(2 pi u2)
//   below(n) unbiased rejection sampling on next_u64()
//   shuffle  Fisher-Yates, descending index, j = below(i + 1)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
    // xoshiro must not start at the all-zero state.
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * kInv53; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * kInv53;
    const double u2 = static_cast<double>(next_u64() >> 11) * kInv53;
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * kPi * u2);
  }

  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    std::uint64_t r = next_u64();
    while (r < threshold) r = next_u64();
    return r % bound;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

}  // namespace ff2
