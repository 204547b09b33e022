#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dg {

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 1469598103934665603ULL);
uint64_t fnv1a64(const std::string& s);

// Deterministic RNG. Distributions are implemented here (not via <random>
// distribution classes) so that streams are identical across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), eng_(seed) {}

  // Child stream for a named subsystem; does not consume parent state.
  Rng child(const std::string& label) const {
    return Rng(fnv1a64(std::to_string(seed_) + "/" + label));
  }

  uint64_t bits() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int64_t uniform_int(int64_t n);

  // Standard normal (Box-Muller, one value per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates over indices [0, n).
  std::vector<int64_t> permutation(int64_t n);

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (int64_t i = static_cast<int64_t>(xs.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(xs[static_cast<size_t>(i)], xs[static_cast<size_t>(j)]);
    }
  }

  uint64_t seed() const { return seed_; }
  std::string state_string() const;
  void restore_state(const std::string& s);

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace dg
