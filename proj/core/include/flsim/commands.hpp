#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace flsim {

// Command implementations behind the CLI. Each returns a process exit code;
// failures print a one-line JSON object {"error": ...} to stderr.

struct RunOptions {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

// Runs the simulation and writes config_resolved.json, metrics.csv,
// rounds.jsonl, checkpoint_round<R>.fp32/.json per evaluated round, and
// updates_round<R>.bin when the config asks for saved updates.
int cmd_run(const RunOptions& options);

struct PartitionOptions {
  std::string config_path;
  std::string out_path;
  std::vector<std::string> overrides;
};

// Writes the participant partition plan for the config's training split.
int cmd_partition(const PartitionOptions& options);

struct AnalyzeOptions {
  std::string kind;  // distances | gains | activations | smooth
  std::string in_dir;
  int round = -1;            // -1 = newest artifact present
  int window = 5;            // smooth
  int layer_index = -1;      // activations; -1 = second pooling stage
  int class_label = -1;      // activations; -1 = trigger target class
  std::size_t mask_k = 1000; // gains
};

// Post-processes artifacts from a previous run directory:
//   distances   -> distances_round<R>_{euclidean,cosine}.csv from saved updates
//   gains       -> gains_<method>.csv for naive / advkd_reg / advkd_enh
//   activations -> activations_round<R>_label<L>.csv + per-channel PGMs
//   smooth      -> metrics_smooth.csv with rolling-average columns appended
int cmd_analyze(const AnalyzeOptions& options);

struct GradcheckOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  int samples = 1500;   // sampled coordinates; full sweep when >= param count
  int batch_size = 2;
  bool corrupt = false;  // test hook: perturb one analytic coordinate
};

// Compares analytic gradients against central finite differences (with one
// Richardson refinement) on sampled coordinates; prints the max relative
// error and exits 0 iff it is below 1e-4.
int cmd_gradcheck(const GradcheckOptions& options);

}  // namespace flsim
