#pragma once

#include <vector>

#include "flsim/dataset.hpp"

namespace flsim {

struct TriggerPixel {
  int row = 0;
  int col = 0;
  int channel = 0;
  float value = 1.0f;
};

// A pixel-overwrite backdoor pattern plus the class it should elicit.
struct TriggerSpec {
  std::vector<TriggerPixel> pixels;
  int target_class = 0;
};

// The stock pattern: a 2x2 block at the top-left corner plus a 1x2 bar two
// columns to its right, all at full intensity.
TriggerSpec make_default_trigger(int target_class = 0);

// Throws if pixels fall outside `input_shape` ([C,H,W] or flat shapes are
// rejected unless 3-D), duplicate coordinates exist, or values leave [0,1].
void validate_trigger(const TriggerSpec& trigger, const std::vector<int>& input_shape);

// Stamps the trigger onto a copy of the example; optionally flips the label to
// the trigger's target class. Untouched pixels are preserved exactly.
LabeledExample apply_trigger(const LabeledExample& example, const TriggerSpec& trigger,
                             bool flip_label);
DenseTensor apply_trigger_input(const DenseTensor& input, const TriggerSpec& trigger);

// Splits the pattern into `num_parts` sub-triggers for distributed placement:
// pixels sorted by (row, col, channel), assigned round-robin. Sub-trigger i
// keeps the full target class.
std::vector<TriggerSpec> split_trigger_dba(const TriggerSpec& trigger, int num_parts);

}  // namespace flsim
