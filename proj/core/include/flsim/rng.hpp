#pragma once

#include <cstdint>
#include <vector>

namespace flsim {

// Counter-based deterministic RNG stream. Streams are cheap value types that
// can be forked with derive(); draws never depend on libstdc++ distribution
// internals, so results are reproducible across compilers and platforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  // Child stream whose draws are independent of this stream's position.
  RngStream derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Unbiased integer in [0, bound); bound must be nonzero.
  std::uint64_t below(std::uint64_t bound);
  // Standard normal via Box-Muller (no cached spare, one draw per call pair).
  double normal();
  // Gamma(shape, 1) via Marsaglia-Tsang; shape must be positive.
  double gamma(double shape);
  // Symmetric Dirichlet(alpha) over n components.
  std::vector<double> dirichlet(double alpha, std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream-purpose tags used to derive non-overlapping child streams.
namespace rng_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSelect = 2;
inline constexpr std::uint64_t kLocal = 3;
inline constexpr std::uint64_t kDefense = 4;
inline constexpr std::uint64_t kPartition = 5;
inline constexpr std::uint64_t kBlobs = 6;
inline constexpr std::uint64_t kBatch = 7;
inline constexpr std::uint64_t kGain = 8;
inline constexpr std::uint64_t kGradCheck = 9;
}  // namespace rng_tag

}  // namespace flsim
