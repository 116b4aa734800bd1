#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace lipb {

// 64-bit FNV-1a, used to turn purpose tags into stream key components.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// xoshiro256** seeded through splitmix64. Normal deviates use Box-Muller so
// sequences do not depend on the standard library's distribution code.
class Engine {
 public:
  using result_type = std::uint64_t;

  explicit Engine(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Immutable counter-based stream key: (root seed, run id, purpose tag, step).
// Two streams with equal keys produce identical sequences; the sequence of a
// stream never depends on what other streams have been used.
class RngStream {
 public:
  explicit RngStream(std::uint64_t root_seed, std::uint64_t run = 0, std::uint64_t purpose = 0,
                     std::uint64_t step = 0)
      : root_(root_seed), run_(run), purpose_(purpose), step_(step) {}

  RngStream with_run(std::uint64_t run) const { return RngStream(root_, run, purpose_, step_); }
  RngStream with_purpose(std::string_view tag) const {
    return RngStream(root_, run_, hash_tag(tag), step_);
  }
  RngStream with_step(std::uint64_t step) const { return RngStream(root_, run_, purpose_, step); }
  // Derives a nested stream: the current key becomes the root of the child.
  RngStream child(std::string_view tag) const { return RngStream(key(), 0, hash_tag(tag), 0); }

  std::uint64_t root_seed() const { return root_; }
  std::uint64_t run() const { return run_; }
  std::uint64_t purpose() const { return purpose_; }
  std::uint64_t step() const { return step_; }

  std::uint64_t key() const;
  Engine engine() const { return Engine(key()); }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t root_;
  std::uint64_t run_;
  std::uint64_t purpose_;
  std::uint64_t step_;
};

}  // namespace lipb
