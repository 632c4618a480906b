/*
 * Copyright 2026 The FACTS Slicer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FACTS_CORE_RNG_HPP_
#define FACTS_CORE_RNG_HPP_

#include <cstdint>
#include <string_view>
#include <vector>

namespace facts {

// Portable pseudo-random source. Every stochastic step in the library draws
// from this generator so that runs reproduce bit-for-bit across compilers and
// standard libraries (std::*_distribution is implementation-defined).
//
//   state seeding : SplitMix64 applied four times to the 64-bit seed
//   core generator: xoshiro256** (Blackman & Vigna, 2018)
//   Uniform01     : top 53 bits of the next output times 2^-53
//   UniformInt(n) : Lemire's multiply-shift with rejection (unbiased)
//   Normal        : Box-Muller, both variates used in order
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t NextU64();
  double Uniform01();
  // Uniform integer in [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n);
  double Normal();

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(UniformInt(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

uint64_t SplitMix64(uint64_t x);

// FNV-1a over the bytes of `key`.
uint64_t HashKey(std::string_view key);

// Keyed counter expansion of a root seed: the seed of a stage depends only on
// the root seed and the stage key, so editing one stage's configuration never
// perturbs another stage's randomness.
//   DeriveSeed(root, key) = SplitMix64(root XOR HashKey(key))
uint64_t DeriveSeed(uint64_t root, std::string_view key);

}  // namespace facts

#endif  // FACTS_CORE_RNG_HPP_
