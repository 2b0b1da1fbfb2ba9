#include "flsim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace flsim {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace

RngStream RngStream::derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  std::uint64_t k = mix64(key_ + kGolden * (a + 1));
  k = mix64(k + kGolden * (b + 1));
  k = mix64(k + kGolden * (c + 1));
  return RngStream(k);
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + kGolden * counter_);
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("RngStream::below: bound must be nonzero");
  std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

double RngStream::normal() {
  double u1 = 1.0 - uniform01();  // (0, 1]
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("RngStream::gamma: shape must be positive");
  if (shape < 1.0) {
    double u = 1.0 - uniform01();  // (0, 1]
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> RngStream::dirichlet(double alpha, std::size_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::dirichlet: n must be nonzero");
  std::vector<double> w(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = gamma(alpha);
    sum += w[i];
  }
  if (sum <= 0.0) {
    for (auto& x : w) x = 1.0 / static_cast<double>(n);
    return w;
  }
  for (auto& x : w) x /= sum;
  return w;
}

}  // namespace flsim
