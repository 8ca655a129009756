#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "simeval/error.hpp"

namespace simeval {

// Seed derivation for named substreams. Hashing (seed, tags...) gives every
// logical unit of work its own engine, so results do not depend on worker
// count or iteration order.
std::uint64_t derive_seed(std::uint64_t base,
                          std::span<const std::string_view> tags);

inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::string_view> tags) {
  return derive_seed(base, std::span<const std::string_view>(tags.begin(), tags.size()));
}

// Deterministic random stream backed by std::mt19937_64 (whose output
// sequence is fixed by the standard) with hand-rolled distributions, since
// libstdc++/libc++ distribution objects are not bit-compatible.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static RngStream from(std::uint64_t base,
                        std::initializer_list<std::string_view> tags) {
    return RngStream(derive_seed(base, tags));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "uniform_int(0)");
    if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Degenerate probabilities consume no randomness, so configurations that
  // disable a stochastic step leave the stream untouched.
  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  // Box-Muller. Two uniforms per call, second variate discarded to keep the
  // draw count a pure function of the call count.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * normal());
  }

  // Number of failures before the first success. p >= 1 consumes no draws.
  std::uint64_t geometric(double p) {
    if (p >= 1.0) return 0;
    if (p <= 0.0) throw Error(ErrorCode::InvalidArgument, "geometric(p<=0)");
    const double u = uniform();
    const double g = std::floor(std::log1p(-u) / std::log1p(-p));
    if (g < 0.0) return 0;
    if (g > 1e18) return static_cast<std::uint64_t>(1e18);
    return static_cast<std::uint64_t>(g);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Index draw proportional to non-negative weights.
  std::size_t weighted_index(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w))
        throw Error(ErrorCode::InvalidArgument, "weighted_index: bad weight");
      total += w;
    }
    if (total <= 0.0)
      throw Error(ErrorCode::InvalidArgument, "weighted_index: zero total");
    const double target = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace simeval
