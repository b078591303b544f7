#pragma once

#include <cstdint>

namespace rha {

// splitmix64 stream. Chosen over std::mt19937 + <random> distributions
// because distribution implementations differ between standard libraries;
// every draw here is exact integer/bit arithmetic, so seeded output is
// byte-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53 bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // approximately standard normal (Irwin-Hall sum of 12): exact double
  // arithmetic, no libm calls, so it stays platform-independent
  double normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

  // uniform integer in [0, n), n >= 1
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

 private:
  std::uint64_t state_;
};

// Mixes components into a single sub-seed (e.g. per epoch/instance/call).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  Rng r(base ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL) ^
        (c * 0x165667B19E3779F9ULL));
  return r.next_u64();
}

}  // namespace rha
