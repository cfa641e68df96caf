#pragma once

#include <cmath>
#include <cstdint>

// Reproducible randomness for the simulator. One independent splitmix64 walk
// per (seed, replication, source) triple, so replications can run in any
// order (or in parallel) and still produce bit-identical statistics, and so
// a source's event stream does not depend on what other sources draw.
//
// Exponential variates use explicit inversion on a (0, 1] uniform instead of
// std::exponential_distribution, whose output is implementation-defined and
// would break cross-platform bit-exactness.

namespace aoi {

// Stateless 64-bit finalizer (one splitmix64 output step).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Stream {
 public:
  explicit Stream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1]: 53 mantissa bits, never exactly zero.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  std::uint64_t state_;
};

// Derive the stream for one (seed, replication, source) triple.
inline Stream stream_for(std::uint64_t seed, std::uint64_t rep, std::uint64_t source) {
  const std::uint64_t s =
      mix64(mix64(mix64(seed) ^ (0x9e3779b97f4a7c15ULL + rep)) ^
            (0xbf58476d1ce4e5b9ULL + source));
  return Stream(s);
}

}  // namespace aoi
