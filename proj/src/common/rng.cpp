#include "vqsf/common/rng.hpp"

#include <cmath>
#include <numbers>

namespace vqsf {
namespace {

constexpr unsigned __int128 kMultiplier =
    (static_cast<unsigned __int128>(0x2360ED051FC65DA4ULL) << 64) | 0x4385DF649FCCF645ULL;

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, Purpose purpose, std::uint64_t index) {
  const std::uint64_t hi = splitmix64(seed) ^ splitmix64(index + 0x51ED270B27A6F3D5ULL);
  const std::uint64_t lo = splitmix64(hi ^ static_cast<std::uint64_t>(purpose));
  const unsigned __int128 init_state = (static_cast<unsigned __int128>(hi) << 64) | lo;
  const unsigned __int128 init_seq =
      (static_cast<unsigned __int128>(static_cast<std::uint64_t>(purpose)) << 64) | splitmix64(index);
  // pcg-cpp seeding sequence.
  state_ = 0;
  inc_ = (init_seq << 1) | 1;
  step();
  state_ += init_state;
  step();
}

void Rng::step() { state_ = state_ * kMultiplier + inc_; }

std::uint64_t Rng::next_u64() {
  step();
  const auto rot = static_cast<unsigned>(state_ >> 122);
  const auto x = static_cast<std::uint64_t>(state_ >> 64) ^ static_cast<std::uint64_t>(state_);
  return (x >> rot) | (x << ((64 - rot) & 63));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  // Lemire-free rejection: unbiased and simple.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace vqsf
