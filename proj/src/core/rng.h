#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rssl {

  // Engine plus distribution helpers with fixed algorithms, so seeded streams
  // are identical across standard-library implementations.
  class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0)
      : _engine(seed) {
    }

    std::uint64_t next() { return _engine(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
      return static_cast<double>(_engine() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1).
    double uniform_open() {
      double u;
      do {
        u = uniform();
      } while (u == 0.0);
      return u;
    }

    // Uniform integer in [lo, hi] by rejection sampling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
      const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
      if (range == 0)
        return static_cast<std::int64_t>(_engine());
      const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
      std::uint64_t x;
      do {
        x = _engine();
      } while (x >= limit);
      return lo + static_cast<std::int64_t>(x % range);
    }

    double normal() {
      const double u1 = uniform_open();
      const double u2 = uniform();
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double gumbel() {
      return -std::log(-std::log(uniform_open()));
    }

    bool bernoulli(double p) {
      return uniform() < p;
    }

  private:
    std::mt19937_64 _engine;
  };

  inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Independent stream seed for (base seed, purpose tag, index). Lets every
  // utterance / step draw its own randomness regardless of processing order.
  inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : tag) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(base ^ h) + index);
  }

}
