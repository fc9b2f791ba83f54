#pragma once

#include <cstdint>
#include <span>

namespace vqsf {

// Sub-stream identifiers. Every consumer of randomness draws from its own
// stream so that, e.g., changing the sampling seed never perturbs weight init.
enum class Purpose : std::uint64_t {
  data = 1,      // shape parameters, surface samples, scans, targets
  init = 2,      // parameter initialization
  sampling = 3,  // autoregressive sampling
  train = 4,     // per-step batch selection, subsampling, partial masking
  test = 5,      // test fixtures
};

// PCG64 (128-bit LCG state, XSL-RR output), the pcg-cpp `pcg64` engine.
//
// Stream splitting: Rng(seed, purpose, index) seeds the state from
// splitmix64(seed) ^ splitmix64(index) and selects the LCG increment from
// (purpose, index), so every (seed, purpose, index) triple is an independent,
// reproducible stream.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, Purpose purpose = Purpose::test, std::uint64_t index = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (no cached second value, so draws are stateless).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  void step();

  unsigned __int128 state_ = 0;
  unsigned __int128 inc_ = 1;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace vqsf
