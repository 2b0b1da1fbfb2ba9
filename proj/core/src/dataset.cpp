#include "flsim/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace flsim {

Dataset synth_blobs(int num_classes, int per_class, std::vector<int> input_shape, double sigma,
                    std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("synth_blobs: num_classes must be >= 2");
  if (per_class < 0) throw std::invalid_argument("synth_blobs: per_class must be >= 0");
  if (sigma < 0.0) throw std::invalid_argument("synth_blobs: sigma must be >= 0");
  const std::size_t dim = shape_volume(input_shape);

  RngStream rng = RngStream(seed).derive(rng_tag::kBlobs);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes));
  for (auto& m : means) {
    m.resize(dim);
    for (auto& x : m) x = rng.uniform(0.2, 0.8);
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.input_shape = input_shape;
  ds.examples.reserve(static_cast<std::size_t>(num_classes) * per_class);
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      LabeledExample ex;
      ex.label = c;
      ex.input.shape = input_shape;
      ex.input.values.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        double v = means[static_cast<std::size_t>(c)][d] + sigma * rng.normal();
        ex.input.values[d] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

}  // namespace flsim
