#pragma once

#include <cmath>
#include <cstdint>

namespace commgate {

/// Counter-based splittable random stream (splitmix64 core). Draws are a pure
/// function of (key, counter), so a stream can be forked by key without
/// advancing the parent; worker/episode/step streams derived this way are
/// independent and reproducible regardless of how much the parent was used.
class Rng {
 public:
  explicit Rng(uint64_t key = 0x9E3779B97F4A7C15ULL) : key_(key), counter_(0) {}

  /// Child stream keyed by (this stream's key, salt). Does not consume draws.
  Rng fork(uint64_t salt) const {
    return Rng(finalize(key_ ^ (0xA24BAED4963EE407ULL + salt * 0x9FB21C651E98DF25ULL)));
  }

  uint64_t next_u64() {
    uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    return finalize(z);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard Gumbel(0, 1) draw.
  double gumbel() {
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    return -std::log(-std::log(u));
  }

  uint64_t key() const { return key_; }

 private:
  static uint64_t finalize(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_;
};

}  // namespace commgate
