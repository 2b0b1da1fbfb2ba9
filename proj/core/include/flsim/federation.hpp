#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flsim/aggregation.hpp"
#include "flsim/attack.hpp"
#include "flsim/dataset.hpp"
#include "flsim/model.hpp"
#include "flsim/partition.hpp"
#include "flsim/rng.hpp"

namespace flsim {

// Data source for a simulation: synthetic Gaussian blobs or IDX image files.
// Blobs are drawn as one pooled set from `seed` (so both splits share the
// per-class means) and sliced per class into train then test examples.
struct DatasetConfig {
  enum class Kind { kBlobs, kIdx };
  Kind kind = Kind::kBlobs;
  // blobs
  int num_classes = 10;
  int per_class_train = 50;
  int per_class_test = 10;
  std::vector<int> input_shape = {1, 16, 16};
  double sigma = 0.1;
  std::uint64_t seed = 1;
  // idx
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  int idx_num_classes = 0;  // 0 = infer from labels
};

struct PartitionConfig {
  double alpha = 0.5;
  std::uint64_t seed = 0;
};

struct SimConfig {
  std::uint64_t seed = 0;
  int num_participants = 100;
  int per_round = 12;
  int rounds = 50;
  // 1-based; rounds >= attack_start_round run the adversarial configs.
  int attack_start_round = 10;
  std::vector<int> adversary_ids;  // ascending, unique, inside [0, N)
  ModelSpec model;                 // resolved model (config layer fills the default CNN)
  LocalTrainConfig train;
  AttackConfig attack;
  DefenseConfig defense;
  PartitionConfig partition;
  DatasetConfig dataset;
  bool adversary_always_selected = true;
  int eval_every = 1;
  bool save_updates = false;
  std::string pretrained_path;  // optional .fp32 starting point
};

// Throws std::invalid_argument naming the offending field if any invariant is
// broken (counts, ranges, defense feasibility at the per-round cohort size).
void validate_config(const SimConfig& config);

struct RoundRecord {
  int round = 0;                  // 1-based
  std::vector<int> selected_ids;  // ascending, length per_round
  std::vector<int> accepted_ids;  // ascending subset of selected_ids
  std::vector<double> update_norms;  // aligned with selected_ids
  bool evaluated = false;
  bool has_asr = false;
  double asr = 0.0;
  double accuracy = 0.0;
  // Cumulative count of adversary updates accepted by the defense so far.
  int adversary_selected_cum = 0;
  std::optional<std::vector<double>> scores;
  std::optional<double> clip_bound;
  std::optional<double> noise_sigma;
};

struct GlobalState {
  int round = 0;  // completed rounds
  FlatParams params;
  PartitionPlan partition;
  std::vector<RoundRecord> history;
};

// Uniform sample of m ids out of [0, N) without replacement, sorted ascending.
// When always_include is set and round >= attack_start_round, every adversary
// id is forced into the sample and the remainder is drawn from the others.
std::vector<int> select_participants(RngStream stream, int num_participants, int per_round,
                                     const std::vector<int>& adversary_ids, bool always_include,
                                     int round, int attack_start_round);

// Owns the model, datasets, partition, and global parameters for one
// simulation and advances it round by round. All randomness flows from
// config.seed through per-(purpose, round, participant) derived streams, so
// histories are bit-identical across runs and worker pool sizes.
class Simulation {
 public:
  // Called after each round with the accepted record, the full update set of
  // the round, and the post-update global parameters.
  using Observer =
      std::function<void(const RoundRecord&, const UpdateSet&, const FlatParams&)>;

  explicit Simulation(SimConfig config);

  const SimConfig& config() const { return config_; }
  const Network& network() const { return net_; }
  const Dataset& train_set() const { return train_; }
  const Dataset& test_set() const { return test_; }
  const GlobalState& state() const { return state_; }

  void set_observer(Observer observer) { observer_ = std::move(observer); }

  // Runs one round; requires state().round < config().rounds.
  RoundRecord run_round();
  // Runs the remaining rounds and returns the full history.
  std::vector<RoundRecord> run_all();

 private:
  SimConfig config_;
  Network net_;
  Dataset train_;
  Dataset test_;
  GlobalState state_;
  RngStream root_;
  bool trigger_fits_data_ = false;
  Observer observer_;
};

// Builds a Simulation from the config and runs every round.
std::vector<RoundRecord> run_simulation(const SimConfig& config);

}  // namespace flsim
