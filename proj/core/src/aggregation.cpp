#include "flsim/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "flsim/hdbscan.hpp"

namespace flsim {
namespace {

double l2_norm_double(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

double euclidean(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::vector<double> all_norms(const UpdateSet& set) {
  std::vector<double> norms(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) norms[i] = l2_norm_double(set.updates[i].values);
  return norms;
}

// Mean of the referenced updates scaled by server_lr / count, summed in the
// order given (callers pass ascending participant positions).
FlatUpdate scaled_mean(const UpdateSet& set, const std::vector<std::size_t>& positions,
                       double server_lr) {
  const std::size_t dim = set.dim();
  std::vector<double> acc(dim, 0.0);
  for (std::size_t pos : positions) {
    const auto& u = set.updates[pos].values;
    for (std::size_t c = 0; c < dim; ++c) acc[c] += static_cast<double>(u[c]);
  }
  const double scale = server_lr / static_cast<double>(positions.size());
  FlatUpdate out;
  out.values.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) out.values[c] = static_cast<float>(acc[c] * scale);
  return out;
}

std::vector<std::size_t> all_positions(std::size_t n) {
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  return pos;
}

void add_noise(FlatUpdate& u, double sigma, RngStream& rng) {
  if (sigma == 0.0) return;
  for (float& x : u.values) {
    x = static_cast<float>(static_cast<double>(x) + sigma * rng.normal());
  }
}

}  // namespace

UpdateSet UpdateSet::create(std::vector<int> ids, std::vector<FlatUpdate> updates) {
  if (ids.empty()) throw std::invalid_argument("update set: empty");
  if (ids.size() != updates.size()) {
    throw std::invalid_argument("update set: id/update count mismatch");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  UpdateSet set;
  set.participant_ids.reserve(ids.size());
  set.updates.reserve(ids.size());
  for (std::size_t idx : order) {
    set.participant_ids.push_back(ids[idx]);
    set.updates.push_back(std::move(updates[idx]));
  }
  for (std::size_t i = 1; i < set.participant_ids.size(); ++i) {
    if (set.participant_ids[i] == set.participant_ids[i - 1]) {
      throw std::invalid_argument("update set: duplicate participant id " +
                                  std::to_string(set.participant_ids[i]));
    }
  }
  const std::size_t dim = set.updates.front().values.size();
  for (const auto& u : set.updates) {
    if (u.values.size() != dim) {
      throw std::invalid_argument("update set: updates have differing lengths");
    }
  }
  return set;
}

DistanceMatrix pairwise_distance(const UpdateSet& set, DistanceMetric metric) {
  const std::size_t n = set.size();
  if (n < 2) throw std::invalid_argument("pairwise_distance: need at least two updates");
  DistanceMatrix mat;
  mat.n = n;
  mat.metric = metric;
  mat.values.assign(n * n, 0.0);
  std::vector<double> norms;
  if (metric == DistanceMetric::kCosine) {
    norms = all_norms(set);
    for (std::size_t i = 0; i < n; ++i) {
      if (norms[i] == 0.0) {
        throw std::invalid_argument("pairwise_distance: zero-norm update from participant " +
                                    std::to_string(set.participant_ids[i]));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d;
      if (metric == DistanceMetric::kEuclidean) {
        d = euclidean(set.updates[i].values, set.updates[j].values);
      } else {
        const auto& a = set.updates[i].values;
        const auto& b = set.updates[j].values;
        double dot = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) {
          dot += static_cast<double>(a[c]) * static_cast<double>(b[c]);
        }
        d = 1.0 - dot / (norms[i] * norms[j]);
        if (d < 0.0) d = 0.0;  // guard fp overshoot on near-identical directions
      }
      mat.values[i * n + j] = d;
      mat.values[j * n + i] = d;
    }
  }
  return mat;
}

std::string defense_rule_name(DefenseRule rule) {
  switch (rule) {
    case DefenseRule::kFedavg: return "fedavg";
    case DefenseRule::kMultiKrum: return "multi_krum";
    case DefenseRule::kNormClipDp: return "norm_clip_dp";
    case DefenseRule::kFlame: return "flame";
  }
  throw std::logic_error("defense_rule_name: unknown rule");
}

DefenseRule defense_rule_from_name(const std::string& name) {
  if (name == "fedavg") return DefenseRule::kFedavg;
  if (name == "multi_krum") return DefenseRule::kMultiKrum;
  if (name == "norm_clip_dp") return DefenseRule::kNormClipDp;
  if (name == "flame") return DefenseRule::kFlame;
  throw std::invalid_argument("unknown defense rule: " + name);
}

AggregationOutcome fedavg_aggregate(const UpdateSet& set, double server_lr) {
  if (set.size() == 0) throw std::invalid_argument("fedavg: empty update set");
  AggregationOutcome out;
  out.aggregate = scaled_mean(set, all_positions(set.size()), server_lr);
  out.accepted_ids = set.participant_ids;
  out.diagnostics.update_norms = all_norms(set);
  return out;
}

std::vector<double> krum_scores(const UpdateSet& set, int f, bool squared) {
  const int n = static_cast<int>(set.size());
  if (f < 0) throw std::invalid_argument("krum_scores: f must be >= 0");
  const int neighbors = n - f - 2;
  if (neighbors < 1) {
    throw std::invalid_argument("krum_scores: need n - f - 2 >= 1, got n = " +
                                std::to_string(n) + ", f = " + std::to_string(f));
  }
  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
  std::vector<double> dists;
  for (int i = 0; i < n; ++i) {
    dists.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = euclidean(set.updates[static_cast<std::size_t>(i)].values,
                           set.updates[static_cast<std::size_t>(j)].values);
      dists.push_back(squared ? d * d : d);
    }
    std::sort(dists.begin(), dists.end());
    double acc = 0.0;
    for (int t = 0; t < neighbors; ++t) acc += dists[static_cast<std::size_t>(t)];
    scores[static_cast<std::size_t>(i)] = acc;
  }
  return scores;
}

AggregationOutcome multi_krum_aggregate(const UpdateSet& set, int f, int m, double server_lr,
                                        bool squared) {
  const int n = static_cast<int>(set.size());
  if (!(2 * f + 2 < n)) {
    throw std::invalid_argument("multi_krum: requires 2f + 2 < n, got n = " +
                                std::to_string(n) + ", f = " + std::to_string(f));
  }
  if (m < 1 || m > n) throw std::invalid_argument("multi_krum: requires 1 <= m <= n");
  std::vector<double> scores = krum_scores(set, f, squared);
  std::vector<std::size_t> order = all_positions(set.size());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(scores[a], set.participant_ids[a]) <
           std::tie(scores[b], set.participant_ids[b]);
  });
  std::vector<std::size_t> kept(order.begin(), order.begin() + m);
  std::sort(kept.begin(), kept.end());  // restore ascending-id summation order
  AggregationOutcome out;
  out.aggregate = scaled_mean(set, kept, server_lr);
  for (std::size_t pos : kept) out.accepted_ids.push_back(set.participant_ids[pos]);
  out.diagnostics.update_norms = all_norms(set);
  out.diagnostics.scores = std::move(scores);
  return out;
}

FlatUpdate norm_clip(const FlatUpdate& u, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("norm_clip: max_norm must be > 0");
  const double norm = l2_norm_double(u.values);
  if (norm <= max_norm) return u;
  const double scale = max_norm / norm;
  FlatUpdate out;
  out.values.resize(u.values.size());
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(u.values[i]) * scale);
  }
  return out;
}

AggregationOutcome weak_dp_aggregate(const UpdateSet& set, double max_norm, double sigma,
                                     double server_lr, RngStream& rng) {
  if (set.size() == 0) throw std::invalid_argument("weak_dp: empty update set");
  if (!(sigma >= 0.0)) throw std::invalid_argument("weak_dp: sigma must be >= 0");
  UpdateSet clipped = set;
  for (auto& u : clipped.updates) u = norm_clip(u, max_norm);
  AggregationOutcome out;
  out.aggregate = scaled_mean(clipped, all_positions(clipped.size()), server_lr);
  add_noise(out.aggregate, sigma, rng);
  out.accepted_ids = set.participant_ids;
  out.diagnostics.update_norms = all_norms(set);
  out.diagnostics.clip_bound = max_norm;
  out.diagnostics.noise_sigma = sigma;
  return out;
}

AggregationOutcome flame_aggregate(const UpdateSet& set, double lambda,
                                   double min_cluster_fraction, double server_lr,
                                   RngStream& rng) {
  const std::size_t n = set.size();
  if (n < 3) throw std::invalid_argument("flame: need at least three updates");
  if (!(lambda >= 0.0)) throw std::invalid_argument("flame: lambda must be >= 0");
  if (!(min_cluster_fraction > 0.0 && min_cluster_fraction <= 1.0)) {
    throw std::invalid_argument("flame: min_cluster_fraction must be in (0, 1]");
  }
  const std::size_t mcs = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(min_cluster_fraction * static_cast<double>(n))) + 1);
  DistanceMatrix cosine = pairwise_distance(set, DistanceMetric::kCosine);
  HdbscanResult cluster = hdbscan_largest_cluster(cosine.values, n, mcs);
  std::vector<std::size_t> kept = cluster.members;  // ascending positions
  if (kept.empty()) kept = all_positions(n);

  std::vector<double> kept_norms;
  kept_norms.reserve(kept.size());
  for (std::size_t pos : kept) kept_norms.push_back(l2_norm_double(set.updates[pos].values));
  std::vector<double> sorted_norms = kept_norms;
  std::sort(sorted_norms.begin(), sorted_norms.end());
  double clip_bound;
  const std::size_t kn = sorted_norms.size();
  if (kn % 2 == 1) {
    clip_bound = sorted_norms[kn / 2];
  } else {
    clip_bound = 0.5 * (sorted_norms[kn / 2 - 1] + sorted_norms[kn / 2]);
  }

  const std::size_t dim = set.dim();
  std::vector<double> acc(dim, 0.0);
  for (std::size_t idx = 0; idx < kept.size(); ++idx) {
    const auto& u = set.updates[kept[idx]].values;
    double scale = 1.0;
    if (clip_bound > 0.0 && kept_norms[idx] > clip_bound) scale = clip_bound / kept_norms[idx];
    for (std::size_t c = 0; c < dim; ++c) acc[c] += static_cast<double>(u[c]) * scale;
  }
  const double mean_scale = server_lr / static_cast<double>(kept.size());
  AggregationOutcome out;
  out.aggregate.values.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    out.aggregate.values[c] = static_cast<float>(acc[c] * mean_scale);
  }
  const double noise_sigma = lambda * clip_bound;
  add_noise(out.aggregate, noise_sigma, rng);
  for (std::size_t pos : kept) out.accepted_ids.push_back(set.participant_ids[pos]);
  out.diagnostics.update_norms = all_norms(set);
  out.diagnostics.clip_bound = clip_bound;
  out.diagnostics.noise_sigma = noise_sigma;
  return out;
}

AggregationOutcome apply_defense(const DefenseConfig& config, const UpdateSet& set,
                                 RngStream& rng) {
  switch (config.rule) {
    case DefenseRule::kFedavg:
      return fedavg_aggregate(set, config.server_lr);
    case DefenseRule::kMultiKrum:
      return multi_krum_aggregate(set, config.f, config.m, config.server_lr,
                                  config.krum_squared);
    case DefenseRule::kNormClipDp:
      return weak_dp_aggregate(set, config.max_norm, config.sigma, config.server_lr, rng);
    case DefenseRule::kFlame:
      return flame_aggregate(set, config.lambda, config.min_cluster_fraction, config.server_lr,
                             rng);
  }
  throw std::logic_error("apply_defense: unknown rule");
}

}  // namespace flsim
