#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace todkat {

/// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3", SC'11). A stream is a 64-bit key; draws are the encryption
/// of an incrementing 128-bit counter under that key. split() derives an independent
/// child key from a name, so each component gets its own reproducible stream
/// without sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Child stream keyed by (this key, name). Does not advance this stream.
  Rng split(std::string_view name) const;
  Rng split(std::uint64_t index) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1); never returns 0.
  double uniform_open();
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard Gumbel(0, 1).
  double gumbel();
  std::vector<double> normal_vector(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const { return (std::uint64_t{key_[1]} << 32) | key_[0]; }

  /// One Philox4x32-10 block, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  unsigned used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace todkat
