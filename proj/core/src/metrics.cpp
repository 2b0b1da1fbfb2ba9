#include "flsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace flsim {
namespace {

constexpr std::size_t kEvalChunk = 256;

DenseTensor pack_batch(const std::vector<DenseTensor>& inputs, const std::vector<int>& shape) {
  std::vector<int> batch_shape;
  batch_shape.push_back(static_cast<int>(inputs.size()));
  batch_shape.insert(batch_shape.end(), shape.begin(), shape.end());
  DenseTensor batch = DenseTensor::zeros(batch_shape);
  const std::size_t stride = shape_volume(shape);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].values.size() != stride) {
      throw std::invalid_argument("evaluation: sample shape mismatch");
    }
    std::copy(inputs[i].values.begin(), inputs[i].values.end(),
              batch.values.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return batch;
}

int argmax_row(const DenseTensor& logits, std::size_t row, int num_classes) {
  const std::size_t base = row * static_cast<std::size_t>(num_classes);
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (logits.values[base + static_cast<std::size_t>(c)] >
        logits.values[base + static_cast<std::size_t>(best)]) {
      best = c;
    }
  }
  return best;
}

int sign_of(float x) { return (x > 0.0f) - (x < 0.0f); }

}  // namespace

double attack_success_rate(const Network& net, const FlatParams& params, const Dataset& test,
                           const TriggerSpec& trigger, bool exclude_target_class) {
  if (test.size() == 0) throw std::invalid_argument("attack_success_rate: empty test set");
  validate_trigger(trigger, test.input_shape);
  std::vector<DenseTensor> chunk;
  std::size_t evaluated = 0;
  std::size_t hits = 0;
  auto flush = [&]() {
    if (chunk.empty()) return;
    DenseTensor logits = net.forward(params, pack_batch(chunk, test.input_shape));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      if (argmax_row(logits, r, net.num_classes()) == trigger.target_class) ++hits;
    }
    evaluated += chunk.size();
    chunk.clear();
  };
  for (const auto& ex : test.examples) {
    if (exclude_target_class && ex.label == trigger.target_class) continue;
    chunk.push_back(apply_trigger_input(ex.input, trigger));
    if (chunk.size() == kEvalChunk) flush();
  }
  flush();
  if (evaluated == 0) {
    throw std::invalid_argument("attack_success_rate: no samples left to evaluate");
  }
  return static_cast<double>(hits) / static_cast<double>(evaluated);
}

double test_accuracy(const Network& net, const FlatParams& params, const Dataset& test) {
  if (test.size() == 0) throw std::invalid_argument("test_accuracy: empty test set");
  std::vector<DenseTensor> chunk;
  std::vector<int> labels;
  std::size_t hits = 0;
  auto flush = [&]() {
    if (chunk.empty()) return;
    DenseTensor logits = net.forward(params, pack_batch(chunk, test.input_shape));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      if (argmax_row(logits, r, net.num_classes()) == labels[r]) ++hits;
    }
    chunk.clear();
    labels.clear();
  };
  for (const auto& ex : test.examples) {
    chunk.push_back(ex.input);
    labels.push_back(ex.label);
    if (chunk.size() == kEvalChunk) flush();
  }
  flush();
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::vector<std::size_t> top_k_mask(const FlatParams& params, std::size_t k) {
  const std::size_t n = params.values.size();
  if (k > n) throw std::invalid_argument("top_k_mask: k exceeds parameter count");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(static_cast<double>(params.values[a]));
    const double mb = std::fabs(static_cast<double>(params.values[b]));
    if (ma != mb) return ma > mb;
    return a < b;
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::size_t scaled_mask_size(std::size_t param_count, std::size_t requested_k) {
  if (param_count == 0) throw std::invalid_argument("scaled_mask_size: empty parameter vector");
  const std::size_t cap = std::max<std::size_t>(1, param_count / 10);
  return std::min(requested_k, cap);
}

double update_gain(const FlatUpdate& poison, const FlatUpdate& clean,
                   const std::vector<std::size_t>& mask) {
  if (poison.values.size() != clean.values.size()) {
    throw std::invalid_argument("update_gain: update lengths differ");
  }
  double acc = 0.0;
  for (std::size_t idx : mask) {
    if (idx >= poison.values.size()) throw std::invalid_argument("update_gain: mask out of range");
    acc += static_cast<double>(poison.values[idx]) * static_cast<double>(clean.values[idx]);
  }
  return acc;
}

double update_sign_gain(const FlatUpdate& poison, const FlatUpdate& clean,
                        const std::vector<std::size_t>& mask) {
  if (poison.values.size() != clean.values.size()) {
    throw std::invalid_argument("update_sign_gain: update lengths differ");
  }
  double acc = 0.0;
  for (std::size_t idx : mask) {
    if (idx >= poison.values.size()) {
      throw std::invalid_argument("update_sign_gain: mask out of range");
    }
    acc += sign_of(poison.values[idx]) * sign_of(clean.values[idx]);
  }
  return acc;
}

std::vector<GainReport> gain_reports(const Network& net, const FlatParams& global_params,
                                     const Dataset& train, const PartitionPlan& plan,
                                     const std::vector<int>& participant_ids,
                                     const std::vector<AttackConfig>& attacks,
                                     const LocalTrainConfig& train_config, std::size_t mask_k,
                                     std::uint64_t seed) {
  if (participant_ids.empty()) throw std::invalid_argument("gain_reports: no participants");
  const std::size_t k = scaled_mask_size(global_params.values.size(), mask_k);
  const std::vector<std::size_t> mask = top_k_mask(global_params, k);
  const RngStream root(seed);
  const AttackConfig clean_config;  // benign

  std::vector<FlatUpdate> clean_updates;
  clean_updates.reserve(participant_ids.size());
  for (int pid : participant_ids) {
    if (pid < 0 || static_cast<std::size_t>(pid) >= plan.assignments.size()) {
      throw std::invalid_argument("gain_reports: participant id outside partition plan");
    }
    RngStream stream = root.derive(rng_tag::kGain, 0, static_cast<std::uint64_t>(pid));
    clean_updates.push_back(local_train(net, global_params, train,
                                        plan.assignments[static_cast<std::size_t>(pid)],
                                        clean_config, train_config, stream));
  }

  std::vector<GainReport> reports;
  reports.reserve(attacks.size());
  for (const auto& attack : attacks) {
    GainReport report;
    report.method = attack.method;
    report.mask_size = mask.size();
    report.entries.reserve(participant_ids.size());
    for (std::size_t i = 0; i < participant_ids.size(); ++i) {
      const int pid = participant_ids[i];
      RngStream stream = root.derive(rng_tag::kGain, 0, static_cast<std::uint64_t>(pid));
      FlatUpdate attacked = local_train(net, global_params, train,
                                        plan.assignments[static_cast<std::size_t>(pid)], attack,
                                        train_config, stream);
      GainEntry entry;
      entry.participant_id = pid;
      entry.update_gain = update_gain(attacked, clean_updates[i], mask);
      entry.update_sign_gain = update_sign_gain(attacked, clean_updates[i], mask);
      report.entries.push_back(entry);
    }
    std::sort(report.entries.begin(), report.entries.end(),
              [](const GainEntry& a, const GainEntry& b) {
                return std::tie(a.update_gain, a.participant_id) <
                       std::tie(b.update_gain, b.participant_id);
              });
    reports.push_back(std::move(report));
  }
  return reports;
}

ActivationGrid activation_grid(const Network& net, const FlatParams& params,
                               const Dataset& samples, int layer_index) {
  if (samples.size() == 0) throw std::invalid_argument("activation_grid: empty sample set");
  if (layer_index < 0 || static_cast<std::size_t>(layer_index) >= net.num_layers()) {
    throw std::invalid_argument("activation_grid: layer index out of range");
  }
  if (!std::holds_alternative<MaxPoolSpec>(net.spec().layers[static_cast<std::size_t>(layer_index)])) {
    throw std::invalid_argument("activation_grid: layer is not a pooling stage");
  }
  const int label = samples.examples.front().label;
  for (const auto& ex : samples.examples) {
    if (ex.label != label) throw std::invalid_argument("activation_grid: mixed labels");
  }
  const std::vector<int>& grid_shape = net.activation_shape(static_cast<std::size_t>(layer_index));
  const std::size_t grid_size = shape_volume(grid_shape);
  std::vector<double> acc(grid_size, 0.0);

  std::vector<DenseTensor> chunk;
  auto flush = [&]() {
    if (chunk.empty()) return;
    std::vector<DenseTensor> acts =
        net.forward_activations(params, pack_batch(chunk, samples.input_shape));
    const DenseTensor& layer_out = acts[static_cast<std::size_t>(layer_index)];
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const std::size_t base = r * grid_size;
      for (std::size_t c = 0; c < grid_size; ++c) {
        acc[c] += static_cast<double>(layer_out.values[base + c]);
      }
    }
    chunk.clear();
  };
  for (const auto& ex : samples.examples) {
    chunk.push_back(ex.input);
    if (chunk.size() == kEvalChunk) flush();
  }
  flush();

  ActivationGrid grid;
  grid.layer_index = layer_index;
  grid.class_label = label;
  grid.mean = DenseTensor::zeros(grid_shape);
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t c = 0; c < grid_size; ++c) {
    grid.mean.values[c] = static_cast<float>(acc[c] * inv);
  }
  return grid;
}

std::vector<double> rolling_average(const std::vector<double>& series, int window) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("rolling_average: window must be odd and >= 1");
  }
  const int n = static_cast<int>(series.size());
  const int half = window / 2;
  std::vector<double> out(series.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += series[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace flsim
