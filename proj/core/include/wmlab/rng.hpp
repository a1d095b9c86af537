#pragma once

#include <cmath>
#include <cstdint>

namespace wmlab {

// splitmix64: the single PRNG primitive used everywhere. Every random decision
// in the project derives from a seed through this, so results are reproducible
// bit-for-bit on a given machine regardless of thread count or call site.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Box-Muller; second value of each pair is cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // independent stream for item `index`; used to decouple per-sample work
  // from iteration order (parallel eval must not change results)
  Rng fork(uint64_t index) const {
    uint64_t s = state_;
    uint64_t a = splitmix64(s);
    s ^= 0x632be59bd9b4e019ull + index * 0x9e3779b97f4a7c15ull;
    uint64_t b = splitmix64(s);
    return Rng(a ^ (b + index));
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ±1 sequence keyed by `seed`; the spread-spectrum carrier.
// One splitmix64 draw per element, sign taken from the top bit.
inline void fill_pn(uint64_t seed, double* out, size_t n) {
  uint64_t s = seed;
  for (size_t i = 0; i < n; ++i) {
    out[i] = (splitmix64(s) >> 63) ? 1.0 : -1.0;
  }
}

}  // namespace wmlab
