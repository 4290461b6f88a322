#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace wklm {

// Seeded random source. Integer and real draws are implemented on top of the
// raw engine output so streams are identical across standard libraries.
//
// substream() derives a child generator from the seed this generator was
// created with (not its current state), so named substreams are stable no
// matter how many values the parent has already produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  // Uniform real in [0, 1) with 53 bits of precision.
  double uniform01();
  bool bernoulli(double p) { return uniform01() < p; }
  double normal();

  Rng substream(std::string_view name) const;
  Rng substream(std::uint64_t index) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
// Stable 64-bit FNV-1a; std::hash is not portable across implementations.
std::uint64_t stable_hash(std::string_view text);

}  // namespace wklm
