#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace channel_axes {

// Mixes (seed, stream) into a 64-bit engine seed. Resampling loops key one
// stream per resample so results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. The uniform/normal/index transforms are
// implemented here rather than via <random> distributions so the streams are
// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(derive_seed(seed, stream)) {}

  std::uint64_t next() { return engine_(); }
  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  double normal();                     // standard normal, Box-Muller
  std::size_t index(std::size_t n);    // uniform in [0, n)

  template <class T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }
  template <class T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace channel_axes
