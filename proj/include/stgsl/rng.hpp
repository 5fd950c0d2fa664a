/*
 * Copyright 2026 The stgsl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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
#include <limits>
#include <random>
#include <string_view>

namespace stgsl {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; mixes a 64-bit value into a well-distributed seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Root of all randomness for a run. Each consumer asks for a named substream
/// (windows, gumbel, dropout, init, folds, ...) so that freezing or reseeding
/// one stream leaves the others untouched.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t derive(std::string_view name, std::uint64_t index = 0) const {
    return mix64(mix64(seed_ ^ fnv1a(name)) + index);
  }
  Engine stream(std::string_view name, std::uint64_t index = 0) const {
    return Engine(derive(name, index));
  }
  SeedTree child(std::string_view name, std::uint64_t index = 0) const {
    return SeedTree(derive(name, index));
  }

 private:
  std::uint64_t seed_;
};

/// Uniform double in the open interval (0, 1); never returns an endpoint.
inline double uniform_open(Engine& rng) {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  return (static_cast<double>(rng() >> 11) + 0.5) * kScale;
}

/// Standard Gumbel(0, 1) draw by inverse transform.
inline double gumbel(Engine& rng) {
  return -std::log(-std::log(uniform_open(rng)));
}

/// Standard normal draw (Box-Muller), implemented here so that draws do not
/// depend on the standard library's distribution implementation.
inline double standard_normal(Engine& rng) {
  const double u1 = uniform_open(rng);
  const double u2 = uniform_open(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Uniform integer in [0, n) by rejection; avoids modulo bias.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <typename It>
void shuffle(It first, It last, Engine& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    std::swap(first[i - 1], first[uniform_index(rng, i)]);
  }
}

}  // namespace stgsl
