#ifndef LUMIX_RNG_HPP
#define LUMIX_RNG_HPP

// Seeded random source and the distribution samplers used by the mixing
// and label-perturbation code.
//
// Generator: xoshiro256** (Blackman & Vigna), state filled from the seed by
// SplitMix64 (Steele, Lea & Flood). Constants:
//   SplitMix64: gamma 0x9e3779b97f4a7c15, mix multipliers 0xbf58476d1ce4e5b9
//               and 0x94d049bb133111eb, shifts 30/27/31.
//   xoshiro256**: result rotl(s1 * 5, 7) * 9, state update with t = s1 << 17
//                 and rotl(s3, 45).
//
// Named sub-streams: the seed of stream "name" under root seed r is
//   splitmix64_mix(r ^ fnv1a64(name))
// where fnv1a64 uses offset basis 0xcbf29ce484222325 and prime 0x100000001b3.
// Streams with different names never share state, so drawing more values
// from one stream leaves every other stream's sequence untouched.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "lumix/error.hpp"

namespace lumix {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view name) noexcept {
  return splitmix64_mix(root ^ fnv1a64(name));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                           std::uint64_t index) noexcept {
  return splitmix64_mix(derive_seed(root, name) ^ splitmix64_mix(index + 0x9e3779b97f4a7c15ULL));
}

/// xoshiro256** state. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = splitmix64_mix(x);
    }
  }

  /// Independent stream for a named purpose ("box", "lambda_r", ...).
  static Rng stream(std::uint64_t root, std::string_view name) noexcept {
    return Rng(derive_seed(root, name));
  }
  static Rng stream(std::uint64_t root, std::string_view name, std::uint64_t index) noexcept {
    return Rng(derive_seed(root, name, index));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  std::uint64_t seed() const noexcept { return seed_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

/// Uniform double in [0, 1) from the top 53 bits.
inline double sample_uniform(Rng& rng) noexcept {
  return static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection keeps it exactly unbiased.
inline std::uint64_t sample_index(std::uint64_t n, Rng& rng) {
  detail::require(n > 0, ErrorKind::invalid_argument, "sample_index: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng.next();
    if (r >= threshold) return r % n;
  }
}

/// Box-Muller, cosine branch only. Consumes exactly two uniforms per draw.
inline double sample_gaussian(double mu, double sigma, Rng& rng) {
  detail::require(sigma >= 0.0 && std::isfinite(sigma) && std::isfinite(mu), ErrorKind::invalid_argument,
                  "sample_gaussian: sigma must be finite and non-negative");
  const double u1 = 1.0 - sample_uniform(rng);  // (0, 1]
  const double u2 = sample_uniform(rng);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  if (sigma == 0.0) return mu;
  return mu + sigma * z;
}

/// Gamma(shape, 1). Marsaglia-Tsang squeeze for shape >= 1; shape < 1 uses
/// Gamma(shape + 1) * U^(1/shape).
inline double sample_gamma(double shape, Rng& rng) {
  detail::require(shape > 0.0 && std::isfinite(shape), ErrorKind::invalid_argument,
                  "sample_gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, rng);
    const double u = 1.0 - sample_uniform(rng);
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = sample_gaussian(0.0, 1.0, rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = sample_uniform(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double sample_beta(double alpha, double beta, Rng& rng) {
  detail::require(alpha > 0.0 && beta > 0.0 && std::isfinite(alpha) && std::isfinite(beta),
                  ErrorKind::invalid_argument, "sample_beta: shape parameters must be positive");
  const double x = sample_gamma(alpha, rng);
  const double y = sample_gamma(beta, rng);
  const double sum = x + y;
  if (sum <= 0.0) return 0.5;
  return x / sum;
}

/// In-place Fisher-Yates: for i = n-1 down to 1, swap(v[i], v[j]) with
/// j = sample_index(i + 1).
template <typename T>
void shuffle_in_place(std::span<T> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(sample_index(i, rng));
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

/// Uniform random permutation of 0..n-1.
inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  shuffle_in_place(std::span<std::size_t>(perm), rng);
  return perm;
}

}  // namespace lumix

#endif  // LUMIX_RNG_HPP
