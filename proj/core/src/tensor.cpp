#include "flsim/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flsim {

std::size_t shape_volume(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("shape_volume: empty shape");
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("shape_volume: non-positive dim in " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

DenseTensor::DenseTensor(std::vector<int> s, std::vector<float> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (shape_volume(shape) != values.size()) {
    throw std::invalid_argument("DenseTensor: shape " + shape_to_string(shape) +
                                " does not match value count " + std::to_string(values.size()));
  }
}

DenseTensor DenseTensor::zeros(std::vector<int> shape) {
  std::size_t n = shape_volume(shape);
  return DenseTensor(std::move(shape), std::vector<float>(n, 0.0f));
}

void ensure_finite(const std::vector<float>& values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + ": non-finite value");
  }
}

void ensure_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + ": non-finite value");
  }
}

}  // namespace flsim
