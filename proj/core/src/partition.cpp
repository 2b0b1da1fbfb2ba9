#include "flsim/partition.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace flsim {

PartitionPlan dirichlet_partition(const Dataset& dataset, int num_participants, double alpha,
                                  std::uint64_t seed) {
  if (num_participants < 1) {
    throw std::invalid_argument("dirichlet_partition: need at least one participant");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet_partition: alpha must be positive");

  PartitionPlan plan;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.assignments.assign(static_cast<std::size_t>(num_participants), {});

  // Bucket example indices per class, preserving ascending order.
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(std::max(dataset.num_classes, 1)));
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    int label = dataset.examples[i].label;
    if (label < 0 || label >= dataset.num_classes) {
      throw std::invalid_argument("dirichlet_partition: label " + std::to_string(label) +
                                  " outside dataset class range");
    }
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }

  RngStream rng = RngStream(seed).derive(rng_tag::kPartition);
  const std::size_t n = static_cast<std::size_t>(num_participants);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    std::vector<double> weights = rng.dirichlet(alpha, n);
    std::vector<double> cumulative(n);
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      acc += weights[p];
      cumulative[p] = acc;
    }
    cumulative[n - 1] = 1.0;
    for (std::size_t idx : by_class[c]) {
      double u = rng.uniform01();
      std::size_t p =
          static_cast<std::size_t>(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                                   cumulative.begin());
      if (p >= n) p = n - 1;
      plan.assignments[p].push_back(idx);
    }
  }
  for (auto& a : plan.assignments) std::sort(a.begin(), a.end());
  return plan;
}

std::string partition_plan_to_json(const PartitionPlan& plan) {
  nlohmann::json j;
  j["alpha"] = plan.alpha;
  j["seed"] = plan.seed;
  j["assignments"] = plan.assignments;
  return j.dump(2) + "\n";
}

PartitionPlan partition_plan_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("partition plan: invalid JSON: ") + e.what());
  }
  PartitionPlan plan;
  try {
    plan.alpha = j.at("alpha").get<double>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.assignments = j.at("assignments").get<std::vector<std::vector<std::size_t>>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("partition plan: ") + e.what());
  }
  return plan;
}

}  // namespace flsim
