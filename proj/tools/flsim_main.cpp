#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flsim/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Deterministic federated-learning simulation lab"};
  app.require_subcommand(1);

  flsim::RunOptions run_options;
  CLI::App* run = app.add_subcommand("run", "Run a simulation and write its artifacts");
  run->add_option("--config", run_options.config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", run_options.out_dir, "Output directory")->required();
  run->add_option("--set", run_options.overrides, "Dot-path override, e.g. attack.alpha=0.7");

  flsim::PartitionOptions partition_options;
  CLI::App* partition =
      app.add_subcommand("partition", "Write the participant partition plan as JSON");
  partition->add_option("--config", partition_options.config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  partition->add_option("--out", partition_options.out_path, "Plan output path")->required();
  partition->add_option("--set", partition_options.overrides, "Dot-path override");

  flsim::AnalyzeOptions analyze_options;
  CLI::App* analyze = app.add_subcommand("analyze", "Post-process artifacts of a finished run");
  analyze->add_option("kind", analyze_options.kind, "distances | gains | activations | smooth")
      ->required();
  analyze->add_option("--in", analyze_options.in_dir, "Run output directory")->required();
  analyze->add_option("--round", analyze_options.round, "Round to analyze (default: newest)");
  analyze->add_option("--window", analyze_options.window, "Smoothing window (odd)");
  analyze->add_option("--layer", analyze_options.layer_index,
                      "Layer index for activations (default: second pooling stage)");
  analyze->add_option("--label", analyze_options.class_label,
                      "Class label for activations (default: trigger target)");
  analyze->add_option("--mask-k", analyze_options.mask_k, "Top-k mask size for gains");

  flsim::GradcheckOptions gradcheck_options;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gradcheck->add_option("--config", gradcheck_options.config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  gradcheck->add_option("--set", gradcheck_options.overrides, "Dot-path override");
  gradcheck->add_option("--samples", gradcheck_options.samples,
                        "Coordinates to sample (>= param count checks all)");
  gradcheck->add_option("--batch", gradcheck_options.batch_size, "Probe batch size");
  gradcheck->add_flag("--corrupt", gradcheck_options.corrupt, "Negative-control hook")
      ->group("");  // hidden

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return flsim::cmd_run(run_options);
  if (partition->parsed()) return flsim::cmd_partition(partition_options);
  if (analyze->parsed()) return flsim::cmd_analyze(analyze_options);
  if (gradcheck->parsed()) return flsim::cmd_gradcheck(gradcheck_options);
  return 1;
}
