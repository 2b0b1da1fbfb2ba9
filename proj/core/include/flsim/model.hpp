#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "flsim/rng.hpp"
#include "flsim/tensor.hpp"

namespace flsim {

// Layer descriptors. Convolutions are valid-padding; pooling is
// non-overlapping with floor sizing.
struct Conv2dSpec {
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
};
struct MaxPoolSpec {
  int size = 2;
};
struct ReluSpec {};
struct FlattenSpec {};
struct DenseSpec {
  int out_features = 1;
};

using LayerSpec = std::variant<Conv2dSpec, MaxPoolSpec, ReluSpec, FlattenSpec, DenseSpec>;

struct ModelSpec {
  std::vector<LayerSpec> layers;
  std::vector<int> input_shape;  // e.g. {1,28,28} or {64}
  int num_classes = 0;
};

// The fixed small CNN used as the default image model:
// Conv(16,5x5) -> ReLU -> MaxPool(2) -> Conv(32,5x5) -> ReLU -> MaxPool(2)
// -> Flatten -> Dense(128) -> ReLU -> Dense(num_classes).
ModelSpec make_default_cnn(std::vector<int> input_shape, int num_classes);

struct ParamSegment {
  int layer_index = 0;
  std::string role;  // "weight" or "bias"
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  std::size_t total_count = 0;
};

bool layouts_compatible(const ParamLayout& a, const ParamLayout& b);

// All model parameters in one contiguous float vector, ordered by the segment
// table of the owning network.
struct FlatParams {
  std::vector<float> values;
  std::shared_ptr<const ParamLayout> layout;
};

// A parameter-space delta with the same element order as FlatParams.
struct FlatUpdate {
  std::vector<float> values;
};

struct LabeledBatch {
  DenseTensor inputs;  // [B, ...input_shape]
  std::vector<int> labels;
  // Empty, or one logit vector (length num_classes) per sample.
  std::vector<std::vector<float>> soft_targets;
};

// Loss = ce * cross_entropy + kd * kd_loss. Weights are non-negative.
struct LossWeights {
  double ce = 1.0;
  double kd = 0.0;
};

class Network {
 public:
  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }
  std::size_t num_params() const { return layout_->total_count; }
  int num_classes() const { return spec_.num_classes; }
  // activation_shape(i) is the output shape of layer i (sample-level, no batch dim).
  const std::vector<int>& activation_shape(std::size_t layer_index) const;
  std::size_t num_layers() const { return spec_.layers.size(); }

  FlatParams zero_params() const;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor, drawn in segment order.
  FlatParams init_params(RngStream rng) const;

  // Logits [B, num_classes].
  DenseTensor forward(const FlatParams& params, const DenseTensor& batch) const;
  // Output of every layer, index i = output of layers[i], each [B, ...].
  std::vector<DenseTensor> forward_activations(const FlatParams& params,
                                               const DenseTensor& batch) const;

  double loss(const FlatParams& params, const LabeledBatch& batch, LossWeights weights,
              double temperature) const;
  FlatUpdate gradient(const FlatParams& params, const LabeledBatch& batch, LossWeights weights,
                      double temperature) const;

 private:
  struct Forward;
  void check_params(const FlatParams& params) const;
  void check_batch(const LabeledBatch& batch, LossWeights weights) const;
  Forward run_forward(const FlatParams& params, const DenseTensor& batch, bool capture) const;

  ModelSpec spec_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<std::vector<int>> shapes_;      // shapes_[0] = input, shapes_[i+1] = out of layer i
  std::vector<int> weight_segment_;           // per layer, index into segments or -1
  std::vector<int> bias_segment_;
};

// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const DenseTensor& logits, const std::vector<int>& labels);

// Mean over the batch of KL(softmax(teacher/T) || softmax(student/T)) * T^2.
double kd_loss(const DenseTensor& student_logits, const DenseTensor& teacher_logits,
               double temperature);

// d cross_entropy / d logits for a single sample: softmax(logits) - onehot(label).
// Accepts shape [C] or [1,C]; returns the same shape.
DenseTensor grad_wrt_logits(const DenseTensor& logits, int label);

// params - lr * update, elementwise in float. lr must be non-negative.
FlatParams sgd_step(const FlatParams& params, const FlatUpdate& update, double lr);

// Central finite difference (L(w+h e_i) - L(w-h e_i)) / (2h) over every
// coordinate, using the actually-representable float perturbations.
FlatUpdate finite_diff_gradient(const Network& net, const FlatParams& params,
                                const LabeledBatch& batch, LossWeights weights,
                                double temperature, double step);

// Per-segment views of a flat parameter vector, in segment order.
std::vector<DenseTensor> unflatten(const FlatParams& params);
// Inverse of unflatten; tensors must match the layout's segment shapes.
FlatParams flatten(const std::shared_ptr<const ParamLayout>& layout,
                   const std::vector<DenseTensor>& tensors);

double l2_norm(const std::vector<float>& values);

}  // namespace flsim
