#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <boost/math/special_functions/erf.hpp>

namespace advsearch {

struct RandomSeed {
  std::uint64_t value = 0;
  friend bool operator==(const RandomSeed&, const RandomSeed&) = default;
};

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Child seed for stream `stream` of `parent`. Injective in `stream`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix64(parent ^ mix64(stream ^ 0x6a09e667f3bcc908ULL));
}

inline RandomSeed derive_seed(RandomSeed parent, std::uint64_t stream) {
  return RandomSeed{derive_seed(parent.value, stream)};
}

// Maps the top 52 bits to the open interval (0,1); 53 would round the top value to 1.
constexpr double bits_to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// Counter-based uniform in (0,1) keyed on (key, counter).
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  return bits_to_open_unit(mix64(derive_seed(key, counter)));
}

// Standard normal quantile. Evaluated in double; the default policy promotes
// to long double, which is several times slower.
inline double normal_quantile(double u) {
  using Policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u, Policy());
}

// Seeded random stream. Copyable; a copy replays the same future draws.
class Rng {
 public:
  explicit Rng(RandomSeed seed) : seed_(seed), engine_(seed.value) {}
  explicit Rng(std::uint64_t seed) : Rng(RandomSeed{seed}) {}

  RandomSeed seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0,1).
  double uniform() { return bits_to_open_unit(engine_()); }

  // Uniform integer in [0, n); unbiased (Lemire's method).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() { return normal_quantile(uniform()); }

  // Independent child stream; does not advance this stream.
  Rng fork(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

  // UniformRandomBitGenerator interface for <algorithm> helpers.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return engine_(); }

 private:
  RandomSeed seed_;
  std::mt19937_64 engine_;
};

}  // namespace advsearch
