#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "flsim/rng.hpp"
#include "flsim/tensor.hpp"

namespace flsim {

struct LabeledExample {
  DenseTensor input;  // values normalized to [0,1]
  int label = 0;
};

// A labeled example plus the teacher's logits on the clean input. The soft
// target is empty until a teacher assigns one.
struct SoftExample {
  DenseTensor input;
  int label = 0;
  std::vector<float> soft_target;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  int num_classes = 0;
  std::vector<int> input_shape;

  std::size_t size() const { return examples.size(); }
};

// Gaussian class blobs in pixel space: one mean image per class drawn
// uniformly, per-example isotropic noise with the given sigma, clipped to
// [0,1]. Examples are grouped by class in ascending label order.
Dataset synth_blobs(int num_classes, int per_class, std::vector<int> input_shape, double sigma,
                    std::uint64_t seed);

}  // namespace flsim
