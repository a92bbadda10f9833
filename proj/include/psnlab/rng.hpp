#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random number generation. Every draw is a pure function of
// (key, counter), so parallel or re-ordered sampling cannot change results.
namespace psnlab::rng {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

// Derived seed for a named substream (tag = small integer role id).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return combine(seed, tag);
}
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t idx) {
  return combine(combine(seed, tag), idx);
}

inline std::uint64_t at(std::uint64_t key, std::uint64_t counter) {
  return mix64(key ^ mix64(counter + 0xD1B54A32D192ED03ULL));
}

// Uniform in (0, 1); never returns exactly 0 or 1.
inline double uniform01(std::uint64_t key, std::uint64_t counter) {
  return (static_cast<double>(at(key, counter) >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller on counters (2c, 2c+1).
inline double gaussian(std::uint64_t key, std::uint64_t counter) {
  const double u1 = uniform01(key, 2 * counter);
  const double u2 = uniform01(key, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Sequential convenience wrapper over the counter scheme.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return at(key_, counter_++); }
  double uniform() { return uniform01(key_, counter_++); }
  double normal() {
    const double g = gaussian(key_, counter_);
    counter_ += 1;
    return g;
  }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace psnlab::rng
