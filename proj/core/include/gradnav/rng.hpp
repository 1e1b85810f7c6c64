// Copyright 2026 The GRaD-Nav Authors
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

#ifndef GRADNAV_RNG_HPP_
#define GRADNAV_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace gradnav {

// Deterministic random source. Distribution code is written out here rather
// than relying on <random> distributions so streams are stable regardless of
// standard library version.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double canonical() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  // Standard normal via Box-Muller; one spare value cached.
  double normal();

  int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive bounds

  // Derives an independent substream.
  Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gradnav

#endif  // GRADNAV_RNG_HPP_
