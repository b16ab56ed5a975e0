#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace fedhorizon {

/// Seeded generator whose every draw is bit-identical across platforms.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are not, so the conversions below
/// are spelled out:
///   uniform01   top 53 bits of one engine draw times 2^-53, in [0, 1)
///   below(n)    rejection sampling on the engine output, unbiased
///   normal      Box-Muller on two uniform01 draws, no caching
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t below(std::uint64_t bound);
  double normal();

  /// Fisher-Yates, walking from the back: swap i with below(i + 1).
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seed for one (round, node) training call, derived from the shared base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t round_index, std::string_view node_id);

}  // namespace fedhorizon
