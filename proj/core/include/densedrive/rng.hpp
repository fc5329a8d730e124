#pragma once

#include <cmath>
#include <cstdint>

namespace densedrive::rng {

/// splitmix64 step; used both as a generator and to derive stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic seed for a named substream, independent of evaluation order.
inline std::uint64_t derive(std::uint64_t base, std::uint64_t a,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = base;
  splitmix64(s);
  s ^= 0x632be59bd9b4e019ull * (a + 1);
  splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ull * (b + 1);
  splitmix64(s);
  s ^= 0xd1b54a32d192ed03ull * (c + 1);
  return splitmix64(s);
}

/// Self-contained generator with fully specified uniform and normal draws,
/// so sampled values are reproducible across platforms and standard-library
/// versions.
class Engine {
 public:
  explicit Engine(std::uint64_t seed) : state_(seed) {
    // decorrelate adjacent seeds
    splitmix64(state_);
  }

  std::uint64_t next() { return splitmix64(state_); }

  /// uniform in [0, 1)
  double uniform() { return (next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// standard normal via Box-Muller (no cached spare, one pair per call)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::uint64_t state_;
};

}  // namespace densedrive::rng
