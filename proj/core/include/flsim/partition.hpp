#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flsim/dataset.hpp"

namespace flsim {

struct PartitionPlan {
  double alpha = 0.5;
  std::uint64_t seed = 0;
  // assignments[p] = ascending example indices owned by participant p.
  // Participants jointly cover the dataset exactly once.
  std::vector<std::vector<std::size_t>> assignments;
};

// Non-IID split: for each class (ascending), draw a symmetric Dirichlet(alpha)
// weight vector over participants and assign each of that class's example
// indices by an independent categorical draw.
PartitionPlan dirichlet_partition(const Dataset& dataset, int num_participants, double alpha,
                                  std::uint64_t seed);

std::string partition_plan_to_json(const PartitionPlan& plan);
PartitionPlan partition_plan_from_json(const std::string& text);

}  // namespace flsim
