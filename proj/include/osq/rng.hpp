// Copyright 2026 The Osq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OSQ_RNG_HPP_
#define OSQ_RNG_HPP_

#include <cmath>
#include <cstdint>

#include "osq/error.hpp"

namespace osq {

namespace detail {

// splitmix64 finalizer (Steele, Lea & Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Derives an independent stream seed from a base seed and up to three
/// tag words. Pure function; used to give every (step, example) its own
/// replayable stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = detail::mix64(base + 0x9e3779b97f4a7c15ULL);
  h = detail::mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = detail::mix64(h ^ (b + 0x3c6ef372fe94f82aULL));
  h = detail::mix64(h ^ (c + 0x78dde6e5fd29f05dULL));
  return h;
}

/// Deterministic generator: splitmix64 (a counter advanced by a fixed odd
/// constant, output through a 64-bit mixing function). Identical seed and
/// call sequence yield identical samples on every platform; the generator
/// keeps a draw counter so tests can audit exactly how many draws an
/// operation consumed.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    ++draws_;
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// One Bernoulli sample; consumes exactly one uniform draw.
  int bernoulli(double p) {
    require(p >= 0.0 && p <= 1.0 && std::isfinite(p), ErrorKind::kDomain,
            "bernoulli: probability must lie in [0, 1]");
    return uniform01() < p ? 1 : 0;
  }

  /// Gaussian sample via Box-Muller; consumes exactly two uniform draws
  /// (no cached spare, so draw accounting stays simple).
  double normal(double mean, double stddev) {
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
  }

  /// Uniform integer in [lo, hi]; consumes exactly one draw.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    require(lo <= hi, ErrorKind::kDomain,
            "uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  /// Child stream seeded from one draw of this stream.
  RngState split() { return RngState(next_u64()); }

  std::uint64_t draws() const noexcept { return draws_; }

 private:
  std::uint64_t state_;
  std::uint64_t draws_ = 0;
};

/// One Bernoulli emission decision (free function mirror of
/// RngState::bernoulli).
inline int sample_bernoulli(double p, RngState& rng) { return rng.bernoulli(p); }

}  // namespace osq

#endif  // OSQ_RNG_HPP_
