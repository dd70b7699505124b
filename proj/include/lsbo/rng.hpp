#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "lsbo/common.hpp"

namespace lsbo {

// Deterministic random stream. All distributions are implemented explicitly
// (canonical uniforms, Box-Muller normals, rejection for bounded integers) so
// that a given seed reproduces the same draws on any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Box-Muller; u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Unbiased draw from [0, n).
  std::uint64_t integer(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::integer: n must be positive");
    const std::uint64_t rem = (0 - n) % n;  // 2^64 mod n
    if (rem == 0) return gen_() % n;
    const std::uint64_t bound = 0 - rem;
    std::uint64_t x = gen_();
    while (x >= bound) x = gen_();
    return x % n;
  }

  // Child stream keyed by purpose. Does not advance the parent state, so
  // consumers can be added or reordered without perturbing sibling streams.
  Rng fork(std::string_view tag) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(tag)));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// First k entries of a seeded Fisher-Yates pass: k distinct indices from
// [0, n), order random.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t k,
                                                           Rng& rng) {
  if (k > n)
    throw std::invalid_argument("sample_without_replacement: k exceeds n");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.integer(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace lsbo
