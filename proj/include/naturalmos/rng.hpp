#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace naturalmos {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Counter-based random stream keyed by (seed, purpose). Draw i is a pure
/// function of the key and i, so masks and noise are reproducible no matter
/// in which order streams are consumed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view purpose)
      : key_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a64(purpose)))) {}

  RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index)
      : RngStream(detail::splitmix64(seed ^ detail::splitmix64(index | 0x8000000000000000ULL)),
                  purpose) {}

  std::uint64_t bits(std::uint64_t i) const { return detail::splitmix64(key_ ^ detail::splitmix64(i)); }

  /// Uniform on [0, 1).
  double uniform(std::uint64_t i) const {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(std::uint64_t i, double lo, double hi) const {
    return lo + (hi - lo) * uniform(i);
  }

  /// Standard normal via Box-Muller on draws (2i, 2i+1).
  double normal(std::uint64_t i) const {
    double u1 = 1.0 - uniform(2 * i);      // (0, 1]
    double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t i, std::uint64_t n) const { return bits(i) % n; }

 private:
  std::uint64_t key_;
};

/// Stateful convenience wrapper when the draw order itself is well defined
/// (seeded shuffles, sequential sampling).
class SequentialRng {
 public:
  SequentialRng(std::uint64_t seed, std::string_view purpose) : stream_(seed, purpose) {}

  double uniform() { return stream_.uniform(counter_++); }
  double uniform(double lo, double hi) { return stream_.uniform(counter_++, lo, hi); }
  double normal() { return stream_.normal(counter_++); }
  std::uint64_t below(std::uint64_t n) { return stream_.below(counter_++, n); }

  /// Fisher-Yates shuffle.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  RngStream stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace naturalmos
