#include "lipb/rng.hpp"

#include <cmath>
#include <numbers>

namespace lipb {
namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Engine::Engine(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    x += 0x9e3779b97f4a7c15ULL;
    word = splitmix64(x);
  }
}

Engine::result_type Engine::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Engine::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Engine::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Engine::below(std::uint64_t bound) {
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t x;
  do {
    x = (*this)();
  } while (x >= limit);
  return x % bound;
}

std::uint64_t RngStream::key() const {
  std::uint64_t h = splitmix64(root_ ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ run_);
  h = splitmix64(h ^ purpose_);
  h = splitmix64(h ^ step_);
  return h;
}

}  // namespace lipb
