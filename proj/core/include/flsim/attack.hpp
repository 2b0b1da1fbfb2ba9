#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "flsim/dataset.hpp"
#include "flsim/model.hpp"
#include "flsim/trigger.hpp"

namespace flsim {

enum class AttackMethod { kBenign, kNaive, kAdvkdReg, kAdvkdEnh };

const char* attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& name);

// Distributed trigger placement: this participant trains with sub-trigger
// part_index of num_parts (evaluation always uses the assembled pattern).
struct DbaConfig {
  int num_parts = 4;
  int part_index = 0;
};

struct AttackConfig {
  AttackMethod method = AttackMethod::kBenign;
  double alpha = 0.5;  // KD loss weight; forced to 0 for benign and naive
  double gamma = 2.0;
  double beta = 0.5;
  double poison_fraction = 0.3;
  TriggerSpec trigger = make_default_trigger();
  std::optional<DbaConfig> dba;
};

struct LocalTrainConfig {
  int epochs = 2;
  int batch_size = 64;
  double learning_rate = 0.01;
  double temperature = 1.0;
};

// Soft-target override for a poisoned sample. Copies the clean teacher logits,
// then rewrites the target coordinate to
//   clean[label] + max((clean[label] - min(clean)) * gamma
//                        + (poison[target] - poison[label]),
//                      (clean[label] - min(clean)) * beta).
// label must differ from target. The result at target never falls below the
// value at label.
std::vector<float> poisoned_soft_target(const std::vector<float>& clean_logits,
                                        const std::vector<float>& poison_logits, int label,
                                        int target, double gamma, double beta);

// Teacher pass: pairs each shard example with the current global model's
// logits on the clean input.
std::vector<SoftExample> generate_soft_targets(const Network& net, const FlatParams& teacher,
                                               const Dataset& data,
                                               const std::vector<std::size_t>& shard);

enum class PoisonMode { kHardLabelOnly, kKeepSoft, kPoisonSoft };

// Evaluates the teacher on a triggered input; `batch_pos` identifies the
// sample within the batch so callers can memoize per shard example.
using TeacherEvalFn = std::function<std::vector<float>(std::size_t batch_pos,
                                                       const DenseTensor& triggered_input)>;

// Returns a copy of the batch in which the first ceil(poison_fraction * |B|)
// samples carry the trigger and the flipped hard label. kKeepSoft leaves soft
// targets untouched; kPoisonSoft rewrites them via poisoned_soft_target using
// teacher logits on the triggered input (samples already labeled as the
// target class keep their clean soft target). Length and order are preserved.
std::vector<SoftExample> poison_batch(const std::vector<SoftExample>& batch,
                                      const TriggerSpec& trigger, double poison_fraction,
                                      PoisonMode mode, const TeacherEvalFn& teacher_eval,
                                      double gamma, double beta);

// Shard-local index batches for one epoch: a seeded shuffle (the stream is
// mixed with the epoch index) sliced into batch_size chunks, short tail kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, int epoch,
                                                    const RngStream& stream);

// One participant's round: copy the global parameters, train `epochs` epochs
// of SGD over the shard under (1 - alpha) * CE + alpha * KD, and return the
// parameter delta. Benign participants run the same loop without poisoning.
FlatUpdate local_train(const Network& net, const FlatParams& global_params, const Dataset& data,
                       const std::vector<std::size_t>& shard, const AttackConfig& attack,
                       const LocalTrainConfig& train, RngStream rng);

}  // namespace flsim
