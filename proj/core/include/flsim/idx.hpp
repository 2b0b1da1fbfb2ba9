#pragma once

#include <string>

#include "flsim/dataset.hpp"

namespace flsim {

// Loads an IDX image/label file pair (the MNIST container format: big-endian
// headers, magic 0x00000803 for images and 0x00000801 for labels). Pixel bytes
// are normalized to [0,1]. Malformed input is rejected with the offending file
// and byte offset. num_classes is inferred as max(label)+1 unless overridden.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int num_classes_override = 0);

}  // namespace flsim
