#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace damf {

// Deterministic RNG with independent streams derived from one seed.
// All draws go through hand-rolled transforms (not std distributions,
// whose output is implementation-defined), so results are bit-stable
// across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(mix(seed, stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n) without modulo bias (rejection sampling).
  std::size_t index(std::size_t n) {
    const std::uint64_t n64 = n;
    const std::uint64_t rem = (0ULL - n64) % n64;  // 2^64 mod n
    std::uint64_t x = next_u64();
    if (rem != 0) {
      const std::uint64_t limit = 0ULL - rem;
      while (x >= limit) x = next_u64();
    }
    return static_cast<std::size_t>(x % n64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed;
    std::uint64_t a = splitmix64(x);
    x ^= 0xD1B54A32D192ED03ULL * (stream + 1);
    return a ^ splitmix64(x);
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream ids used by the trainers. Keeping every consumer on its own
// stream is what makes the beta=0 trajectory reduction exact: extra
// draws on one stream never shift another.
namespace rng_stream {
inline constexpr std::uint64_t kInitModel = 0;
inline constexpr std::uint64_t kInitAuxiliary = 1;
inline constexpr std::uint64_t kMnarBatch = 2;
inline constexpr std::uint64_t kMcarBatch = 3;
inline constexpr std::uint64_t kTrace = 4;
inline constexpr std::uint64_t kSplit = 5;
inline constexpr std::uint64_t kObservation = 6;
inline constexpr std::uint64_t kWorld = 7;
}  // namespace rng_stream

}  // namespace damf
