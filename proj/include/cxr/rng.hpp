// Copyright 2026 The cxr Authors
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

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace cxr {

// Every stochastic component in the toolkit (shuffles, init, augmentation,
// dropout) draws from these generators so that a run is a pure function of
// its seed, independent of platform and thread count.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives one key from several (seed, epoch, index, ...) components.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x8f1bbcdc3f2a1d55ull;
  for (auto p : parts) h = splitmix64(h ^ p);
  return h;
}

/// Uniform [0,1) addressed by (key, index). Stateless, usable from any thread.
inline float counter_uniform(std::uint64_t key, std::uint64_t index) {
  const std::uint64_t r = splitmix64(key + index * 0x9e3779b97f4a7c15ull);
  return static_cast<float>(r >> 40) * (1.0f / 16777216.0f);
}

/// Sequential PRNG over the splitmix64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ull)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform_float() { return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f); }

  /// Uniform integer in [0, n). n must be positive.
  std::int64_t bounded(std::int64_t n) {
    // 128-bit multiply rejection-free map; bias < 2^-64, irrelevant here.
    const auto un = static_cast<std::uint64_t>(n);
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * un) >> 64));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Fisher-Yates with our own bounded() so order is platform-stable.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.bounded(static_cast<std::int64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace cxr
