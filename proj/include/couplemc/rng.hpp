#pragma once

#include <cmath>
#include <cstdint>

namespace couplemc::rng {

// SplitMix64 output function. Used as a counter-based generator: the i-th
// value of a stream with key k is mix64(k + i*GOLDEN). Streams derived from
// distinct (seed, path, stream) triples are decorrelated by construction,
// which is what makes per-path Monte Carlo reproducible independently of
// scheduling and worker count.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t path,
                                std::uint64_t stream_id) {
  std::uint64_t k = mix64(seed + kGolden);
  k = mix64(k ^ (path * 0xd1b54a32d192ed03ULL + kGolden));
  k = mix64(k ^ (stream_id * 0x94d049bb133111ebULL + kGolden));
  return k;
}

/// Counter-based stream of standard normal variates (Box-Muller on top of
/// SplitMix64). Deterministic given (seed, path, stream_id) and the number
/// of values consumed so far.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t path, std::uint64_t stream_id)
      : key_(stream_key(seed, path, stream_id)) {}

  double next() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  void fill(double* out, int n) {
    for (int i = 0; i < n; ++i) out[i] = next();
  }

  double next_uniform() { return next_unit(); }

 private:
  // in (0,1): (x>>11) in [0, 2^53), shifted by 0.5 so log() is safe
  double next_unit() {
    const std::uint64_t x = mix64(key_ + ctr_++ * kGolden);
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

}  // namespace couplemc::rng
