#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flsim/model.hpp"
#include "flsim/rng.hpp"

namespace flsim {

// One round's worth of local updates, normalized to ascending participant id.
struct UpdateSet {
  std::vector<int> participant_ids;
  std::vector<FlatUpdate> updates;

  // Sorts by participant id and validates: non-empty, unique ids, equal
  // vector lengths. Throws std::invalid_argument on violation.
  static UpdateSet create(std::vector<int> ids, std::vector<FlatUpdate> updates);

  std::size_t size() const { return participant_ids.size(); }
  std::size_t dim() const { return updates.empty() ? 0 : updates.front().values.size(); }
};

enum class DistanceMetric { kEuclidean, kCosine };

// Row-major n x n matrix of pairwise distances, zero diagonal, symmetric.
struct DistanceMatrix {
  std::size_t n = 0;
  DistanceMetric metric = DistanceMetric::kEuclidean;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

// Euclidean: ||u_i - u_j||_2. Cosine: 1 - dot/(|u_i||u_j|), clamped to >= 0.
// A zero vector under the cosine metric is rejected, naming the participant.
DistanceMatrix pairwise_distance(const UpdateSet& set, DistanceMetric metric);

enum class DefenseRule { kFedavg, kMultiKrum, kNormClipDp, kFlame };

std::string defense_rule_name(DefenseRule rule);
DefenseRule defense_rule_from_name(const std::string& name);

struct DefenseConfig {
  DefenseRule rule = DefenseRule::kFedavg;
  double server_lr = 1.0;
  // multi_krum
  int f = 1;
  int m = 1;
  bool krum_squared = true;
  // norm_clip_dp
  double max_norm = 1.0;
  double sigma = 0.0;
  // flame
  double lambda = 0.001;
  double min_cluster_fraction = 0.5;
};

struct DefenseDiagnostics {
  std::vector<double> update_norms;          // per participant, input order of the set
  std::optional<std::vector<double>> scores; // multi_krum only
  std::optional<double> clip_bound;          // norm_clip_dp / flame
  std::optional<double> noise_sigma;         // norm_clip_dp / flame
};

struct AggregationOutcome {
  FlatUpdate aggregate;
  std::vector<int> accepted_ids;  // ascending
  DefenseDiagnostics diagnostics;
};

// aggregate = (server_lr / n) * sum of all updates, accumulated in double in
// ascending participant-id order.
AggregationOutcome fedavg_aggregate(const UpdateSet& set, double server_lr);

// score_i = sum over the n-f-2 nearest neighbors of the distance to them,
// squared euclidean when `squared`, plain euclidean otherwise.
// Requires n - f - 2 >= 1.
std::vector<double> krum_scores(const UpdateSet& set, int f, bool squared = true);

// Keeps the m lowest-score updates (ties to the lower participant id) and
// averages them with server_lr / m. Requires 2f + 2 < n and 1 <= m <= n.
AggregationOutcome multi_krum_aggregate(const UpdateSet& set, int f, int m, double server_lr,
                                        bool squared = true);

// Scales u down to norm max_norm when it exceeds it; otherwise returns u
// unchanged. Requires max_norm > 0.
FlatUpdate norm_clip(const FlatUpdate& u, double max_norm);

// Clips every update to max_norm, averages, then adds iid Gaussian noise with
// the given sigma per coordinate (no draws when sigma == 0).
AggregationOutcome weak_dp_aggregate(const UpdateSet& set, double max_norm, double sigma,
                                     double server_lr, RngStream& rng);

// Cosine-distance clustering filter with min_cluster_size =
// max(2, floor(min_cluster_fraction * n) + 1), median-norm clipping of the
// kept updates, averaging, and per-coordinate Gaussian noise with
// sigma = lambda * clip_bound. Degenerate clustering keeps everyone.
// Requires n >= 3, lambda >= 0, min_cluster_fraction in (0, 1].
AggregationOutcome flame_aggregate(const UpdateSet& set, double lambda,
                                   double min_cluster_fraction, double server_lr,
                                   RngStream& rng);

// Dispatches on config.rule. The rng stream is only consumed by rules that
// draw noise.
AggregationOutcome apply_defense(const DefenseConfig& config, const UpdateSet& set,
                                 RngStream& rng);

}  // namespace flsim
