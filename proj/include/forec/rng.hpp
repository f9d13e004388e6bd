#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace forec {

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; the distribution transforms are hand-rolled so the same seed
// yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1).
  double real01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform integer in [lo, hi], inclusive.
  long uniform_int(long lo, long hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
    return lo + static_cast<long>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via Box-Muller. Two uniforms per draw, no cached state.
  double normal() {
    double u1 = real01();
    while (u1 <= 0.0) u1 = real01();
    const double u2 = real01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derives a child seed from (seed, tag, k). Used to give each pipeline
  // stage, sampler, and user its own independent stream.
  static std::uint64_t derive(std::uint64_t seed, std::string_view tag,
                              std::uint64_t k = 0) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64 offset basis
    for (const char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return splitmix(seed ^ h ^ (k * 0x9e3779b97f4a7c15ULL));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace forec
