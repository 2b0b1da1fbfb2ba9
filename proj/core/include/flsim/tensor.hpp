#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flsim {

// Row-major dense tensor of 32-bit floats. Shape dims are positive.
struct DenseTensor {
  std::vector<int> shape;
  std::vector<float> values;

  DenseTensor() = default;
  DenseTensor(std::vector<int> s, std::vector<float> v);

  static DenseTensor zeros(std::vector<int> shape);

  std::size_t size() const { return values.size(); }
};

// Product of dims; throws on non-positive dims.
std::size_t shape_volume(const std::vector<int>& shape);

std::string shape_to_string(const std::vector<int>& shape);

// Throws std::runtime_error naming `what` if any value is NaN or infinite.
void ensure_finite(const std::vector<float>& values, const char* what);
void ensure_finite(const std::vector<double>& values, const char* what);

}  // namespace flsim
