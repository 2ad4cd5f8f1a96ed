#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace cpr {

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Seed of the named substream of `root`: splitmix64(root ^ fnv1a64(name)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view name) noexcept;

/// Seeded generator. The raw stream is std::mt19937_64, whose output sequence
/// is fixed by the C++ standard; uniform(), below() and shuffle() are computed
/// from it with integer/IEEE arithmetic only and are therefore identical on
/// every platform. normal() additionally goes through libm log/sqrt/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n > 0, by rejection (unbiased).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  Rng substream(std::string_view name) const { return Rng(derive_seed(seed_, name)); }

  /// Fisher-Yates.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cpr
