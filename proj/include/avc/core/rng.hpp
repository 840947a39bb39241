#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace avc {

/// Counter-based random stream: draw k is a pure function of (seed, k), so
/// sequences are identical across runs, compilers and platforms. The mixer
/// is the SplitMix64 finalizer applied to seed + k * golden-gamma.
///
/// Distributions are implemented here rather than through <random>, whose
/// distribution algorithms are implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw per call, two uniforms).
  double normal();
  /// Fills `out` with standard normals, using both Box-Muller outputs of
  /// each uniform pair (so the sequence differs from repeated normal()).
  void normals(std::span<double> out);

  /// Independent child stream keyed by `stream_id`.
  RngStream fork(std::uint64_t stream_id) const;

  template <class U>
  void shuffle(std::span<U> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace avc
