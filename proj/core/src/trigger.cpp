#include "flsim/trigger.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <tuple>

namespace flsim {

TriggerSpec make_default_trigger(int target_class) {
  TriggerSpec t;
  t.target_class = target_class;
  t.pixels = {{0, 0, 0, 1.0f}, {0, 1, 0, 1.0f}, {1, 0, 0, 1.0f},
              {1, 1, 0, 1.0f}, {0, 3, 0, 1.0f}, {0, 4, 0, 1.0f}};
  return t;
}

void validate_trigger(const TriggerSpec& trigger, const std::vector<int>& input_shape) {
  if (input_shape.size() != 3) {
    throw std::invalid_argument("trigger: input shape must be [C,H,W], got " +
                                shape_to_string(input_shape));
  }
  if (trigger.pixels.empty()) throw std::invalid_argument("trigger: empty pixel set");
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& px : trigger.pixels) {
    if (px.channel < 0 || px.channel >= input_shape[0] || px.row < 0 || px.row >= input_shape[1] ||
        px.col < 0 || px.col >= input_shape[2]) {
      throw std::invalid_argument("trigger: pixel (" + std::to_string(px.row) + "," +
                                  std::to_string(px.col) + ",ch" + std::to_string(px.channel) +
                                  ") outside input shape " + shape_to_string(input_shape));
    }
    if (!(px.value >= 0.0f && px.value <= 1.0f)) {
      throw std::invalid_argument("trigger: pixel value must lie in [0,1]");
    }
    if (!seen.insert({px.row, px.col, px.channel}).second) {
      throw std::invalid_argument("trigger: duplicate pixel coordinate");
    }
  }
}

DenseTensor apply_trigger_input(const DenseTensor& input, const TriggerSpec& trigger) {
  validate_trigger(trigger, input.shape);
  const int H = input.shape[1], W = input.shape[2];
  DenseTensor out = input;
  for (const auto& px : trigger.pixels) {
    std::size_t idx = (static_cast<std::size_t>(px.channel) * H + px.row) * W + px.col;
    out.values[idx] = px.value;
  }
  return out;
}

LabeledExample apply_trigger(const LabeledExample& example, const TriggerSpec& trigger,
                             bool flip_label) {
  LabeledExample out;
  out.input = apply_trigger_input(example.input, trigger);
  out.label = flip_label ? trigger.target_class : example.label;
  return out;
}

std::vector<TriggerSpec> split_trigger_dba(const TriggerSpec& trigger, int num_parts) {
  if (num_parts < 1) throw std::invalid_argument("split_trigger_dba: num_parts must be >= 1");
  if (static_cast<std::size_t>(num_parts) > trigger.pixels.size()) {
    throw std::invalid_argument("split_trigger_dba: more parts (" + std::to_string(num_parts) +
                                ") than trigger pixels (" + std::to_string(trigger.pixels.size()) +
                                ")");
  }
  std::vector<TriggerPixel> sorted = trigger.pixels;
  std::sort(sorted.begin(), sorted.end(), [](const TriggerPixel& a, const TriggerPixel& b) {
    return std::tie(a.row, a.col, a.channel) < std::tie(b.row, b.col, b.channel);
  });
  std::vector<TriggerSpec> parts(static_cast<std::size_t>(num_parts));
  for (auto& p : parts) p.target_class = trigger.target_class;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    parts[i % static_cast<std::size_t>(num_parts)].pixels.push_back(sorted[i]);
  }
  return parts;
}

}  // namespace flsim
