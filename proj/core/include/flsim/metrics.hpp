#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flsim/attack.hpp"
#include "flsim/dataset.hpp"
#include "flsim/model.hpp"
#include "flsim/partition.hpp"
#include "flsim/trigger.hpp"

namespace flsim {

// Fraction of test inputs classified as the trigger's target class after the
// trigger is stamped on (labels untouched). Counts every sample, including
// those already labeled as the target class, unless exclude_target_class is
// set. Argmax ties go to the lowest class index.
double attack_success_rate(const Network& net, const FlatParams& params, const Dataset& test,
                           const TriggerSpec& trigger, bool exclude_target_class = false);

// Fraction of clean test inputs whose argmax prediction matches the label.
double test_accuracy(const Network& net, const FlatParams& params, const Dataset& test);

// Indices of the k largest |value| parameters; ties go to the lower index.
// Requires k <= |params|.
std::vector<std::size_t> top_k_mask(const FlatParams& params, std::size_t k);

// Mask size actually used on a given model: the requested size, capped at a
// tenth of the parameter count (at least 1) so tiny models stay maskable.
std::size_t scaled_mask_size(std::size_t param_count, std::size_t requested_k);

// Dot product of the two updates restricted to the masked coordinates.
double update_gain(const FlatUpdate& poison, const FlatUpdate& clean,
                   const std::vector<std::size_t>& mask);

// Sum over the mask of sign(poison_i) * sign(clean_i), with sign(0) = 0.
double update_sign_gain(const FlatUpdate& poison, const FlatUpdate& clean,
                        const std::vector<std::size_t>& mask);

struct GainEntry {
  int participant_id = 0;
  double update_gain = 0.0;
  double update_sign_gain = 0.0;
};

struct GainReport {
  AttackMethod method = AttackMethod::kBenign;
  std::size_t mask_size = 0;
  bool sorted_ascending = true;      // entries ordered by update_gain
  std::vector<GainEntry> entries;
};

// For each listed participant, trains one clean arm and one attacked arm from
// the identical (global params, shard, rng stream) triple, masks both updates
// by the top-k parameters of the global model, and reports both gains sorted
// ascending by update_gain. One report per requested attack; the clean arm is
// shared across attacks.
std::vector<GainReport> gain_reports(const Network& net, const FlatParams& global_params,
                                     const Dataset& train, const PartitionPlan& plan,
                                     const std::vector<int>& participant_ids,
                                     const std::vector<AttackConfig>& attacks,
                                     const LocalTrainConfig& train_config, std::size_t mask_k,
                                     std::uint64_t seed);

struct ActivationGrid {
  int layer_index = 0;
  int class_label = 0;
  DenseTensor mean;  // [C,H,W], elementwise mean over the samples
};

// Mean activation of the given pooling layer over a batch of same-label
// samples. The layer at layer_index must be a max-pool stage; mixed labels or
// an empty sample set are rejected.
ActivationGrid activation_grid(const Network& net, const FlatParams& params,
                               const Dataset& samples, int layer_index);

// Centered moving average with truncated windows at the edges. Window must be
// odd and >= 1; output length equals input length.
std::vector<double> rolling_average(const std::vector<double>& series, int window);

}  // namespace flsim
