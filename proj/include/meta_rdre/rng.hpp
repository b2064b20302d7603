#pragma once

#include <cstdint>
#include <limits>

namespace meta_rdre {

// Counter-based generator: the n-th output is a pure function of (key, n),
// so independent streams are obtained by deriving new keys instead of
// advancing shared state. The mixing function is the SplitMix64 finalizer.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + kGolden * ++counter_); }

  // Independent stream identified by `stream_id`; does not disturb this one.
  [[nodiscard]] Rng substream(std::uint64_t stream_id) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(stream_id + kGolden));
    return child;
  }

  // Convenience for nested identifiers (e.g. support size, pair index).
  [[nodiscard]] Rng substream(std::uint64_t a, std::uint64_t b) const {
    return substream(a).substream(b);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace meta_rdre
