/*
 * Copyright 2026 The emc2net Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace emc2net {

/// Counter-based pseudorandom stream built on the SplitMix64 finalizer.
///
/// A stream is (key, counter); output i is mix(key + i * GAMMA). Substreams
/// are derived by hashing a tag into the key, so any (seed, tag...) path
/// yields a reproducible, statistically independent stream. This makes
/// per-frame generation order-free: frame k's draws never depend on how many
/// values frame k-1 consumed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix(seed ^ kKeySalt)) {}

  /// Child stream keyed by (this stream, tag).
  RngStream derive(std::uint64_t tag) const {
    RngStream child(0);
    child.key_ = mix(key_ ^ mix(tag + kDeriveSalt));
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * kGamma); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Modulo bias is negligible for n << 2^64; all uses here are small n.
    return next_u64() % n;
  }

  bool next_bit() { return (next_u64() >> 63) != 0; }

  /// Standard normal pair via Box-Muller.
  std::pair<double, double> next_gaussian_pair() {
    double u1 = next_double();
    double u2 = next_double();
    // Guard log(0); 2^-53 shifts u1 off zero without biasing the tail.
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(t), r * std::sin(t)};
  }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    auto [a, b] = next_gaussian_pair();
    spare_ = b;
    have_spare_ = true;
    return a;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kKeySalt = 0x8F0E1DB4B4B3A6C5ull;
  static constexpr std::uint64_t kDeriveSalt = 0xD6E8FEB86659FD93ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Fisher-Yates shuffle driven by an explicit stream.
template <typename Container>
void shuffle_stream(Container& c, RngStream& rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(c[i - 1], c[j]);
  }
}

}  // namespace emc2net
