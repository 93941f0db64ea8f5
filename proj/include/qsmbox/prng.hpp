// Counter-based pseudo-random generator (splitmix64 finalizer over an
// affine counter). Stateless apart from the counter, so draws are a pure
// function of (key, counter): experiments get bit-identical streams from a
// seed, and substreams for parallel instances never touch shared state.
#pragma once

#include <cstdint>

namespace qsmbox {

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}
}  // namespace detail

class Prng {
 public:
  explicit Prng(std::uint64_t seed) : key_(detail::mix64(seed + detail::kGolden)) {}

  std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

  // Uniform draw in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Independent generator for parallel instance k; derivation depends only on
  // (key, k), never on this generator's counter.
  Prng substream(std::uint64_t k) const {
    Prng p(0);
    p.key_ = detail::mix64(key_ ^ detail::mix64(k * detail::kGolden + 0x5851F42D4C957F2Dull));
    return p;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace qsmbox
