#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace mmcse {

// Key for a stochastic site. Keys form a tree: every site derives its own key
// from (global seed, label, index), so drawing from one site never shifts the
// sequence seen by another.
class Seed {
 public:
  constexpr Seed() = default;
  constexpr explicit Seed(std::uint64_t value) : value_(value) {}

  Seed child(std::string_view label) const;
  Seed child(std::uint64_t index) const;
  Seed child(std::string_view label, std::uint64_t index) const { return child(label).child(index); }

  constexpr std::uint64_t value() const { return value_; }
  friend constexpr bool operator==(Seed a, Seed b) { return a.value_ == b.value_; }

 private:
  std::uint64_t value_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Counter-based stream (SplitMix64 over the seed key). Output k depends only
// on (key, k).
class Rng {
 public:
  explicit Rng(Seed seed) : key_(seed.value()) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mmcse
