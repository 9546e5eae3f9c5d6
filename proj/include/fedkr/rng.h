// Copyright 2026 The FedKR Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDKR_RNG_H_
#define FEDKR_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedkr {

// Stable 64-bit hash of (seed, label). Used to derive per-stream seeds; the
// value never depends on the platform or standard library.
std::uint64_t StableHash(std::uint64_t seed, std::string_view label);

// A seeded random engine with platform-independent distributions.
//
// std::normal_distribution and friends are implementation-defined, so all
// sampling that feeds into results goes through these members instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double Uniform(double low, double high) {
    return low + (high - low) * Uniform();
  }

  // Standard normal via the Marsaglia polar method.
  double Normal();

  // Uniform integer in [0, n). n must be positive.
  std::size_t Below(std::size_t n);

  // Index drawn from unnormalized non-negative weights.
  std::size_t Categorical(const std::vector<double>& weights);

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = Below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::vector<std::size_t> Permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Named, reproducible source of randomness.
//
// A stream is a value: (master_seed, label). Every consumer creates a fresh
// engine from it, so an operation that takes a stream is a pure function of
// its inputs and the stream identity. Sub-streams are labelled with a path,
// e.g. "seed/member/7/generator".
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::string label)
      : master_seed_(master_seed), label_(std::move(label)) {}

  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& label() const { return label_; }

  RngStream Child(std::string_view name) const;
  RngStream Child(std::string_view name, long long index) const;

  std::uint64_t DerivedSeed() const { return StableHash(master_seed_, label_); }
  Rng Engine() const { return Rng(DerivedSeed()); }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t master_seed_ = 0;
  std::string label_;
};

}  // namespace fedkr

#endif  // FEDKR_RNG_H_
