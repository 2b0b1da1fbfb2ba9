#include "flsim/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flsim {

const char* attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::kBenign: return "benign";
    case AttackMethod::kNaive: return "naive";
    case AttackMethod::kAdvkdReg: return "advkd_reg";
    case AttackMethod::kAdvkdEnh: return "advkd_enh";
  }
  return "benign";
}

AttackMethod attack_method_from_name(const std::string& name) {
  if (name == "benign") return AttackMethod::kBenign;
  if (name == "naive") return AttackMethod::kNaive;
  if (name == "advkd_reg") return AttackMethod::kAdvkdReg;
  if (name == "advkd_enh") return AttackMethod::kAdvkdEnh;
  throw std::invalid_argument("unknown attack method \"" + name + "\"");
}

std::vector<float> poisoned_soft_target(const std::vector<float>& clean_logits,
                                        const std::vector<float>& poison_logits, int label,
                                        int target, double gamma, double beta) {
  const std::size_t c = clean_logits.size();
  if (c < 2 || poison_logits.size() != c) {
    throw std::invalid_argument("poisoned_soft_target: logit vectors must share length >= 2");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= c || target < 0 ||
      static_cast<std::size_t>(target) >= c) {
    throw std::invalid_argument("poisoned_soft_target: label or target out of range");
  }
  if (label == target) {
    throw std::invalid_argument("poisoned_soft_target: label must differ from target");
  }
  if (gamma < 0.0 || beta < 0.0) {
    throw std::invalid_argument("poisoned_soft_target: gamma and beta must be non-negative");
  }
  double lo = clean_logits[0];
  for (float v : clean_logits) lo = std::min(lo, static_cast<double>(v));
  const double margin = static_cast<double>(clean_logits[static_cast<std::size_t>(label)]) - lo;
  const double increment =
      std::max(margin * gamma + (static_cast<double>(poison_logits[static_cast<std::size_t>(target)]) -
                                 static_cast<double>(poison_logits[static_cast<std::size_t>(label)])),
               margin * beta);
  std::vector<float> out = clean_logits;
  out[static_cast<std::size_t>(target)] = static_cast<float>(
      static_cast<double>(clean_logits[static_cast<std::size_t>(label)]) + increment);
  return out;
}

std::vector<SoftExample> generate_soft_targets(const Network& net, const FlatParams& teacher,
                                               const Dataset& data,
                                               const std::vector<std::size_t>& shard) {
  std::vector<SoftExample> out;
  out.reserve(shard.size());
  for (std::size_t idx : shard) {
    if (idx >= data.examples.size()) {
      throw std::invalid_argument("generate_soft_targets: shard index " + std::to_string(idx) +
                                  " out of range");
    }
    SoftExample se;
    se.input = data.examples[idx].input;
    se.label = data.examples[idx].label;
    out.push_back(std::move(se));
  }

  const std::size_t chunk = 256;
  const std::size_t dim = shape_volume(data.input_shape);
  const int classes = net.num_classes();
  for (std::size_t start = 0; start < out.size(); start += chunk) {
    const std::size_t stop = std::min(out.size(), start + chunk);
    DenseTensor batch;
    batch.shape.push_back(static_cast<int>(stop - start));
    for (int d : data.input_shape) batch.shape.push_back(d);
    batch.values.resize((stop - start) * dim);
    for (std::size_t i = start; i < stop; ++i) {
      std::copy(out[i].input.values.begin(), out[i].input.values.end(),
                batch.values.begin() + static_cast<std::ptrdiff_t>((i - start) * dim));
    }
    DenseTensor logits = net.forward(teacher, batch);
    for (std::size_t i = start; i < stop; ++i) {
      auto row = logits.values.begin() + static_cast<std::ptrdiff_t>((i - start) * classes);
      out[i].soft_target.assign(row, row + classes);
    }
  }
  return out;
}

std::vector<SoftExample> poison_batch(const std::vector<SoftExample>& batch,
                                      const TriggerSpec& trigger, double poison_fraction,
                                      PoisonMode mode, const TeacherEvalFn& teacher_eval,
                                      double gamma, double beta) {
  if (!(poison_fraction >= 0.0 && poison_fraction <= 1.0)) {
    throw std::invalid_argument("poison_batch: poison_fraction must lie in [0,1]");
  }
  if (mode == PoisonMode::kPoisonSoft && !teacher_eval) {
    throw std::invalid_argument("poison_batch: soft-target poisoning requires a teacher callback");
  }
  std::vector<SoftExample> out = batch;
  if (batch.empty()) return out;
  // Guard against binary-float fuzz pushing exact integer products upward.
  double raw = poison_fraction * static_cast<double>(batch.size());
  std::size_t n_poison = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  n_poison = std::min(n_poison, batch.size());

  for (std::size_t i = 0; i < n_poison; ++i) {
    SoftExample& ex = out[i];
    const int original_label = ex.label;
    ex.input = apply_trigger_input(ex.input, trigger);
    ex.label = trigger.target_class;
    if (mode == PoisonMode::kPoisonSoft && original_label != trigger.target_class) {
      if (ex.soft_target.empty()) {
        throw std::invalid_argument("poison_batch: sample lacks a clean soft target to poison");
      }
      std::vector<float> poison_logits = teacher_eval(i, ex.input);
      ex.soft_target = poisoned_soft_target(batch[i].soft_target, poison_logits, original_label,
                                            trigger.target_class, gamma, beta);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, int epoch,
                                                    const RngStream& stream) {
  if (batch_size < 1) throw std::invalid_argument("epoch_batches: batch_size must be >= 1");
  if (epoch < 0) throw std::invalid_argument("epoch_batches: epoch must be >= 0");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  RngStream shuffle_rng = stream.derive(rng_tag::kBatch, static_cast<std::uint64_t>(epoch));
  shuffle_rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(batch_size)) {
    std::size_t stop = std::min(count, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

FlatUpdate local_train(const Network& net, const FlatParams& global_params, const Dataset& data,
                       const std::vector<std::size_t>& shard, const AttackConfig& attack,
                       const LocalTrainConfig& train, RngStream rng) {
  if (train.epochs < 0) throw std::invalid_argument("local_train: epochs must be >= 0");
  if (train.batch_size < 1) throw std::invalid_argument("local_train: batch_size must be >= 1");
  if (train.learning_rate < 0.0) {
    throw std::invalid_argument("local_train: learning rate must be non-negative");
  }
  if (!(attack.alpha >= 0.0 && attack.alpha <= 1.0)) {
    throw std::invalid_argument("local_train: alpha must lie in [0,1]");
  }
  for (std::size_t idx : shard) {
    if (idx >= data.examples.size()) {
      throw std::invalid_argument("local_train: shard index " + std::to_string(idx) +
                                  " out of range");
    }
  }

  const bool attacking = attack.method != AttackMethod::kBenign;
  const double alpha = (attack.method == AttackMethod::kAdvkdReg ||
                        attack.method == AttackMethod::kAdvkdEnh)
                           ? attack.alpha
                           : 0.0;
  TriggerSpec train_trigger = attack.trigger;
  if (attacking) {
    validate_trigger(attack.trigger, data.input_shape);
    if (attack.dba) {
      if (attack.dba->num_parts < 1 || attack.dba->part_index < 0 ||
          attack.dba->part_index >= attack.dba->num_parts) {
        throw std::invalid_argument("local_train: dba part_index out of range");
      }
      train_trigger = split_trigger_dba(attack.trigger, attack.dba->num_parts)
          [static_cast<std::size_t>(attack.dba->part_index)];
    }
  }
  PoisonMode mode = PoisonMode::kHardLabelOnly;
  if (attack.method == AttackMethod::kAdvkdReg) mode = PoisonMode::kKeepSoft;
  if (attack.method == AttackMethod::kAdvkdEnh) mode = PoisonMode::kPoisonSoft;

  // Teacher pass with the round-start global model.
  std::vector<SoftExample> shard_examples;
  if (alpha > 0.0) {
    shard_examples = generate_soft_targets(net, global_params, data, shard);
  } else {
    shard_examples.reserve(shard.size());
    for (std::size_t idx : shard) {
      SoftExample se;
      se.input = data.examples[idx].input;
      se.label = data.examples[idx].label;
      shard_examples.push_back(std::move(se));
    }
  }

  // Teacher logits on triggered inputs, memoized per shard example (the
  // trigger is fixed for the whole round).
  std::vector<std::vector<float>> poison_logit_cache(shard_examples.size());
  const std::vector<std::size_t>* current_batch = nullptr;
  TeacherEvalFn teacher_eval = [&](std::size_t batch_pos,
                                   const DenseTensor& triggered) -> std::vector<float> {
    std::size_t shard_pos = (*current_batch)[batch_pos];
    std::vector<float>& slot = poison_logit_cache[shard_pos];
    if (slot.empty()) {
      DenseTensor one;
      one.shape.push_back(1);
      for (int d : triggered.shape) one.shape.push_back(d);
      one.values = triggered.values;
      slot = net.forward(global_params, one).values;
    }
    return slot;
  };

  FlatParams params = global_params;
  const std::size_t dim = shape_volume(data.input_shape);
  LossWeights weights{1.0 - alpha, alpha};
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    for (const auto& batch_idx : epoch_batches(shard_examples.size(), train.batch_size, epoch,
                                               rng)) {
      std::vector<SoftExample> batch;
      batch.reserve(batch_idx.size());
      for (std::size_t pos : batch_idx) batch.push_back(shard_examples[pos]);
      if (attacking) {
        current_batch = &batch_idx;
        batch = poison_batch(batch, train_trigger, attack.poison_fraction, mode, teacher_eval,
                             attack.gamma, attack.beta);
        current_batch = nullptr;
      }

      LabeledBatch lb;
      lb.inputs.shape.push_back(static_cast<int>(batch.size()));
      for (int d : data.input_shape) lb.inputs.shape.push_back(d);
      lb.inputs.values.resize(batch.size() * dim);
      lb.labels.resize(batch.size());
      if (alpha > 0.0) lb.soft_targets.resize(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        std::copy(batch[i].input.values.begin(), batch[i].input.values.end(),
                  lb.inputs.values.begin() + static_cast<std::ptrdiff_t>(i * dim));
        lb.labels[i] = batch[i].label;
        if (alpha > 0.0) lb.soft_targets[i] = batch[i].soft_target;
      }

      FlatUpdate grad = net.gradient(params, lb, weights, train.temperature);
      params = sgd_step(params, grad, train.learning_rate);
    }
  }

  FlatUpdate update;
  update.values.resize(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    update.values[i] = params.values[i] - global_params.values[i];
  }
  return update;
}

}  // namespace flsim
