#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace nfar::rng {

/// Roles used when deriving sub-streams, so that distinct consumers of a
/// master seed can never collide. The numeric values are part of the
/// reproducibility contract: changing them changes every derived stream.
enum class Role : std::uint64_t {
  TrainPath = 1,  // replication training path noise
  TestPoint = 2,  // independent test field noise
  NetInit = 3,    // Glorot weight initialisation
  Shuffle = 4,    // per-epoch triple shuffling
  McTrain = 5,    // per-minibatch Monte Carlo points
  McVal = 6,      // run-level validation Monte Carlo points
  McApply = 7,    // operator application outside training
  TrainSeed = 8,  // per-cell training seed in a sweep
};

/// SplitMix64 finalizer. Used as the mixing function of the stream
/// splitting rule.
constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Splitting rule: a derived stream id is the left fold of mix() over the
/// master seed and the given words (e.g. replication index, sample size,
/// role). Equal inputs give equal streams; any differing word gives an
/// unrelated stream.
constexpr std::uint64_t derive(std::uint64_t seed,
                               std::initializer_list<std::uint64_t> words) {
  std::uint64_t s = mix(seed);
  for (std::uint64_t w : words) {
    s = mix(s ^ mix(w));
  }
  return s;
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, Role role) {
  return derive(seed, {a, static_cast<std::uint64_t>(role)});
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b, Role role) {
  return derive(seed, {a, b, static_cast<std::uint64_t>(role)});
}

/// Deterministic random stream. The generator (mt19937_64) and every
/// distribution transform are pinned here rather than delegated to
/// std::*_distribution, whose algorithms are implementation-defined;
/// equal seeds therefore give bit-identical draws on any platform.
class Stream {
public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    // Multiply-shift map of a 64-bit draw onto [0, n); bias is O(n/2^64).
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  /// Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01(); // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace nfar::rng
