#pragma once

// Integer hashing and the seeded random streams used everywhere randomness is
// needed. Every stream is a pure function of its seed so results never depend
// on scheduling or platform.

#include <cstdint>
#include <string>
#include <string_view>

namespace forge {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// FNV-1a, 64-bit, over the raw bytes of `bytes`.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = kFnvOffset;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

/// The splitmix64 output function (no state increment).
constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combines two words into one seed:
///   mix(a, b) = finalize(a ^ finalize(b + gamma))
/// and folds left for more arguments: mix(a, b, c) = mix(mix(a, b), c).
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64_finalize(a ^ splitmix64_finalize(b + kGoldenGamma));
}

template <typename... Rest>
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                            Rest... rest) noexcept {
  return mix(mix(a, b), c, static_cast<std::uint64_t>(rest)...);
}

/// Classic splitmix64 generator: state += gamma, output = finalize(state).
class SplitMix64 {
 public:
  constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += kGoldenGamma;
    return splitmix64_finalize(state_);
  }

  /// Top 53 bits scaled into [0, 1).
  constexpr double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// uniform01() * 2 - 1, i.e. [-1, 1).
  constexpr double uniform_pm1() noexcept { return uniform01() * 2.0 - 1.0; }

  /// next() % n. Modulo bias is accepted; n is always tiny here.
  constexpr std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

 private:
  std::uint64_t state_;
};

/// Per-prompt master seed: finalize(mix(master_seed, fnv1a(prompt_id))).
/// Depends only on the id, so corpus order never changes results.
constexpr std::uint64_t prompt_seed(std::uint64_t master_seed,
                                    std::string_view prompt_id) noexcept {
  return splitmix64_finalize(mix(master_seed, fnv1a64(prompt_id)));
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace forge
