#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "qcd/error.hpp"

namespace qcd {

// SplitMix64 finalizer. Used to turn (seed, replication) pairs into
// well-separated engine seeds so replication order never matters.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// One random stream per Monte Carlo replication. Two streams with the
// same (seed, replication) produce identical draws regardless of thread
// count or execution order.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t replication)
      : engine_(splitmix64(splitmix64(seed) ^
                           splitmix64(replication + 0x51f15eedULL))) {}

  double gauss() { return normal_(engine_); }

  // Uniform on [0, 1).
  double uniform01() { return unit_(engine_); }

  // Uniform integer in [0, n). Requires n >= 1.
  std::uint64_t uniform_below(std::uint64_t n) {
    require(n >= 1, "uniform_below: n must be >= 1");
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  // Geometric count of failures before first success:
  // P(g = j) = rho * (1 - rho)^j for j >= 0. Requires rho in (0, 1].
  std::int64_t geometric(double rho) {
    require(rho > 0.0 && rho <= 1.0, "geometric: rho must be in (0, 1]");
    if (rho == 1.0) return 0;
    const double u = uniform01();
    return static_cast<std::int64_t>(std::floor(std::log1p(-u) / std::log1p(-rho)));
  }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace qcd
