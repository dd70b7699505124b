#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lsbo {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Raised when a sanctioned numeric operation leaves the finite domain
// (NaN/Inf results, domain violations). Never swallowed internally.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Factorization failure after exhausting the jitter ladder.
struct CholeskyError : NumericalError {
  using NumericalError::NumericalError;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Shortest round-tripping decimal form; all text output goes through this so
// files are byte-stable across runs.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace lsbo
