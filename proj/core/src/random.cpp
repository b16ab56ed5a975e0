#include "fedhorizon/random.hpp"

#include <cmath>
#include <numbers>

namespace fedhorizon {

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Largest multiple of bound that fits; draws at or above it are rejected.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return draw % bound;
}

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (const std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis) {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), basis);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t round_index, std::string_view node_id) {
  return mix64(mix64(base ^ mix64(round_index)) ^ fnv1a64(node_id));
}

}  // namespace fedhorizon
