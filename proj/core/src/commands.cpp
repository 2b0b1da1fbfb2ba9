#include "flsim/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "flsim/artifacts.hpp"
#include "flsim/config.hpp"
#include "flsim/federation.hpp"
#include "flsim/metrics.hpp"

namespace flsim {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int fail_json(const std::string& message) {
  json err = {{"error", message}};
  std::cerr << err.dump() << "\n";
  return 1;
}

// A copy of the config that builds datasets without running any rounds.
SimConfig dataset_probe(const SimConfig& config) {
  SimConfig probe = config;
  probe.rounds = 0;
  probe.attack_start_round = 0;
  return probe;
}

std::string round_file(const std::string& dir, const std::string& prefix, int round,
                       const std::string& suffix) {
  return dir + "/" + prefix + std::to_string(round) + suffix;
}

// Newest round number for which dir/prefix<N>suffix exists, or -1.
int newest_round(const std::string& dir, const std::string& prefix, const std::string& suffix) {
  int best = -1;
  if (!fs::is_directory(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= prefix.size() + suffix.size()) continue;
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    const std::string digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                       [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    best = std::max(best, std::stoi(digits));
  }
  return best;
}

SimConfig load_run_config(const std::string& in_dir) {
  const std::string path = in_dir + "/config_resolved.json";
  if (!fs::exists(path)) throw std::runtime_error("missing artifact: " + path);
  return parse_config_file(path);
}

int resolve_round(const AnalyzeOptions& options, const std::string& prefix,
                  const std::string& suffix) {
  int round = options.round;
  if (round < 0) round = newest_round(options.in_dir, prefix, suffix);
  if (round < 0) {
    throw std::runtime_error("missing artifact: " + options.in_dir + "/" + prefix + "<round>" +
                             suffix);
  }
  const std::string path = round_file(options.in_dir, prefix, round, suffix);
  if (!fs::exists(path)) throw std::runtime_error("missing artifact: " + path);
  return round;
}

int analyze_distances(const AnalyzeOptions& options) {
  const int round = resolve_round(options, "updates_round", ".bin");
  UpdateSet set = read_updates(round_file(options.in_dir, "updates_round", round, ".bin"));
  DistanceMatrix euclid = pairwise_distance(set, DistanceMetric::kEuclidean);
  write_text_file(round_file(options.in_dir, "distances_round", round, "_euclidean.csv"),
                  distance_matrix_csv(euclid, set.participant_ids));
  json summary = {{"round", round}, {"updates", set.size()}};
  try {
    DistanceMatrix cosine = pairwise_distance(set, DistanceMetric::kCosine);
    write_text_file(round_file(options.in_dir, "distances_round", round, "_cosine.csv"),
                    distance_matrix_csv(cosine, set.participant_ids));
  } catch (const std::invalid_argument& e) {
    // Cosine is undefined when an update has zero norm; the euclidean matrix
    // is still valid, so report instead of failing.
    summary["cosine_skipped"] = e.what();
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int analyze_gains(const AnalyzeOptions& options) {
  SimConfig config = load_run_config(options.in_dir);
  const int round = resolve_round(options, "checkpoint_round", ".fp32");
  FlatParams params = read_fp32(round_file(options.in_dir, "checkpoint_round", round, ".fp32"));

  Network net(config.model);
  if (params.values.size() != net.num_params()) {
    throw std::runtime_error("checkpoint does not match the configured model");
  }
  params.layout = net.layout();
  Dataset train;
  {
    Simulation sim(dataset_probe(config));
    train = sim.train_set();
  }
  PartitionPlan plan = dirichlet_partition(train, config.num_participants,
                                           config.partition.alpha, config.partition.seed);
  std::vector<int> participants(static_cast<std::size_t>(config.num_participants));
  for (int i = 0; i < config.num_participants; ++i) participants[static_cast<std::size_t>(i)] = i;

  std::vector<AttackConfig> attacks;
  for (AttackMethod method :
       {AttackMethod::kNaive, AttackMethod::kAdvkdReg, AttackMethod::kAdvkdEnh}) {
    AttackConfig attack = config.attack;
    attack.method = method;
    attack.dba.reset();
    attacks.push_back(attack);
  }
  std::vector<GainReport> reports =
      gain_reports(net, params, train, plan, participants, attacks, config.train,
                   options.mask_k, config.seed);
  json summary = {{"round", round}, {"participants", participants.size()}};
  for (const auto& report : reports) {
    const std::string name = attack_method_name(report.method);
    write_text_file(options.in_dir + "/gains_" + name + ".csv", gain_report_csv(report));
    summary["mask_size"] = report.mask_size;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int analyze_activations(const AnalyzeOptions& options) {
  SimConfig config = load_run_config(options.in_dir);
  const int round = resolve_round(options, "checkpoint_round", ".fp32");
  FlatParams params = read_fp32(round_file(options.in_dir, "checkpoint_round", round, ".fp32"));
  Network net(config.model);
  if (params.values.size() != net.num_params()) {
    throw std::runtime_error("checkpoint does not match the configured model");
  }
  params.layout = net.layout();

  Dataset test;
  {
    Simulation sim(dataset_probe(config));
    test = sim.test_set();
  }

  int layer_index = options.layer_index;
  if (layer_index < 0) {
    int seen = 0;
    for (std::size_t i = 0; i < config.model.layers.size(); ++i) {
      if (std::holds_alternative<MaxPoolSpec>(config.model.layers[i])) {
        layer_index = static_cast<int>(i);
        if (++seen == 2) break;  // prefer the second pooling stage
      }
    }
    if (layer_index < 0) throw std::runtime_error("model has no pooling layer to inspect");
  }
  const int label =
      options.class_label >= 0 ? options.class_label : config.attack.trigger.target_class;

  Dataset filtered;
  filtered.num_classes = test.num_classes;
  filtered.input_shape = test.input_shape;
  for (const auto& ex : test.examples) {
    if (ex.label == label) filtered.examples.push_back(ex);
  }
  if (filtered.examples.empty()) {
    throw std::runtime_error("no test samples carry label " + std::to_string(label));
  }

  ActivationGrid grid = activation_grid(net, params, filtered, layer_index);
  const std::string stem = options.in_dir + "/activations_round" + std::to_string(round) +
                           "_label" + std::to_string(label);
  write_text_file(stem + ".csv", activation_grid_csv(grid));
  std::vector<std::string> pgms = write_activation_pgms(stem, grid);
  std::cout << json({{"round", round},
                     {"label", label},
                     {"layer_index", layer_index},
                     {"channels", pgms.size()}})
                   .dump()
            << "\n";
  return 0;
}

int analyze_smooth(const AnalyzeOptions& options) {
  if (options.window < 1 || options.window % 2 == 0) {
    throw std::runtime_error("smooth: window must be odd and >= 1");
  }
  const std::string path = options.in_dir + "/metrics.csv";
  if (!fs::exists(path)) throw std::runtime_error("missing artifact: " + path);
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }

  // Smooth the asr (col 1) and accuracy (col 2) series over the rows that
  // carry values; empty cells stay empty.
  auto smooth_column = [&](std::size_t col) {
    std::vector<std::size_t> where;
    std::vector<double> series;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (col < rows[r].size() && !rows[r][col].empty()) {
        where.push_back(r);
        series.push_back(std::stod(rows[r][col]));
      }
    }
    std::vector<double> smoothed = rolling_average(series, options.window);
    std::vector<std::string> out(rows.size());
    for (std::size_t i = 0; i < where.size(); ++i) out[where[i]] = format_double(smoothed[i]);
    return out;
  };
  std::vector<std::string> asr_smooth = smooth_column(1);
  std::vector<std::string> acc_smooth = smooth_column(2);

  std::string blob = "round,asr,accuracy,adversary_selected_cum,accepted_count,clip_bound,"
                     "noise_sigma,asr_smooth,accuracy_smooth\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      if (c > 0) blob.push_back(',');
      if (c < rows[r].size()) blob += rows[r][c];
    }
    blob.push_back(',');
    blob += asr_smooth[r];
    blob.push_back(',');
    blob += acc_smooth[r];
    blob.push_back('\n');
  }
  write_text_file(options.in_dir + "/metrics_smooth.csv", blob);
  std::cout << json({{"rows", rows.size()}, {"window", options.window}}).dump() << "\n";
  return 0;
}

}  // namespace

int cmd_run(const RunOptions& options) {
  try {
    SimConfig config = parse_config_file(options.config_path, options.overrides);
    fs::create_directories(options.out_dir);
    write_text_file(options.out_dir + "/config_resolved.json", serialize_config(config));

    Simulation sim(config);
    const std::string out = options.out_dir;
    sim.set_observer([&](const RoundRecord& record, const UpdateSet& set,
                         const FlatParams& params) {
      if (config.save_updates) {
        write_updates(round_file(out, "updates_round", record.round, ".bin"), set);
      }
      if (record.evaluated) {
        write_fp32(round_file(out, "checkpoint_round", record.round, ".fp32"), params);
        json sidecar = {{"round", record.round},
                        {"record", json::parse(round_record_json(record))}};
        write_text_file(round_file(out, "checkpoint_round", record.round, ".json"),
                        sidecar.dump(2) + "\n");
      }
    });
    std::vector<RoundRecord> history = sim.run_all();
    write_metrics_csv(options.out_dir + "/metrics.csv", history);
    write_rounds_jsonl(options.out_dir + "/rounds.jsonl", history);

    json summary = {{"rounds", history.size()}};
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
      if (it->evaluated) {
        summary["final_accuracy"] = it->accuracy;
        if (it->has_asr) summary["final_asr"] = it->asr;
        break;
      }
    }
    std::cout << summary.dump() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return fail_json(e.what());
  }
}

int cmd_partition(const PartitionOptions& options) {
  try {
    SimConfig config = parse_config_file(options.config_path, options.overrides);
    Simulation sim(dataset_probe(config));
    PartitionPlan plan = dirichlet_partition(sim.train_set(), config.num_participants,
                                             config.partition.alpha, config.partition.seed);
    write_text_file(options.out_path, partition_plan_to_json(plan));
    std::cout << json({{"participants", plan.assignments.size()},
                       {"examples", sim.train_set().size()}})
                     .dump()
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    return fail_json(e.what());
  }
}

int cmd_analyze(const AnalyzeOptions& options) {
  try {
    if (options.kind == "distances") return analyze_distances(options);
    if (options.kind == "gains") return analyze_gains(options);
    if (options.kind == "activations") return analyze_activations(options);
    if (options.kind == "smooth") return analyze_smooth(options);
    throw std::runtime_error("unknown analyze subcommand '" + options.kind + "'");
  } catch (const std::exception& e) {
    return fail_json(e.what());
  }
}

int cmd_gradcheck(const GradcheckOptions& options) {
  try {
    SimConfig config = parse_config_file(options.config_path, options.overrides);
    Network net(config.model);
    RngStream root(config.seed);
    FlatParams params = net.init_params(root.derive(rng_tag::kInit));

    Simulation sim(dataset_probe(config));
    const Dataset& train = sim.train_set();
    const int batch_size =
        std::max(1, std::min<int>(options.batch_size, static_cast<int>(train.size())));

    LabeledBatch batch;
    std::vector<int> batch_shape{batch_size};
    batch_shape.insert(batch_shape.end(), train.input_shape.begin(), train.input_shape.end());
    batch.inputs = DenseTensor::zeros(batch_shape);
    const std::size_t stride = shape_volume(train.input_shape);
    for (int i = 0; i < batch_size; ++i) {
      const auto& ex = train.examples[static_cast<std::size_t>(i)];
      std::copy(ex.input.values.begin(), ex.input.values.end(),
                batch.inputs.values.begin() + static_cast<std::ptrdiff_t>(i) *
                    static_cast<std::ptrdiff_t>(stride));
      batch.labels.push_back(ex.label);
    }
    const double alpha = config.attack.alpha;
    LossWeights weights{1.0 - alpha, alpha};
    if (weights.kd > 0.0) {
      DenseTensor teacher = net.forward(params, batch.inputs);
      for (int i = 0; i < batch_size; ++i) {
        const std::size_t base =
            static_cast<std::size_t>(i) * static_cast<std::size_t>(net.num_classes());
        batch.soft_targets.emplace_back(teacher.values.begin() + static_cast<std::ptrdiff_t>(base),
                                        teacher.values.begin() +
                                            static_cast<std::ptrdiff_t>(base) +
                                            net.num_classes());
      }
    }

    FlatUpdate analytic = net.gradient(params, batch, weights, config.train.temperature);

    const std::size_t total = net.num_params();
    std::vector<std::size_t> coords;
    if (options.samples <= 0 || static_cast<std::size_t>(options.samples) >= total) {
      coords.resize(total);
      for (std::size_t i = 0; i < total; ++i) coords[i] = i;
    } else {
      RngStream pick = root.derive(rng_tag::kGradCheck);
      std::vector<std::size_t> all(total);
      for (std::size_t i = 0; i < total; ++i) all[i] = i;
      for (int i = 0; i < options.samples; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(pick.below(total - static_cast<std::size_t>(i)));
        std::swap(all[static_cast<std::size_t>(i)], all[j]);
        coords.push_back(all[static_cast<std::size_t>(i)]);
      }
    }

    if (options.corrupt && !coords.empty()) analytic.values[coords.front()] += 1.0e-2f;

    double max_rel = 0.0;
    FlatParams probe_params = params;
    auto loss_with = [&](std::size_t idx, float value) {
      probe_params.values[idx] = value;
      const double out = net.loss(probe_params, batch, weights, config.train.temperature);
      probe_params.values[idx] = params.values[idx];
      return out;
    };
    for (std::size_t idx : coords) {
      const float w = params.values[idx];
      const double h = 1.0e-3 * std::max(1.0, std::fabs(static_cast<double>(w)));
      auto central = [&](double step) {
        const float up = static_cast<float>(static_cast<double>(w) + step);
        const float dn = static_cast<float>(static_cast<double>(w) - step);
        const double denom = static_cast<double>(up) - static_cast<double>(dn);
        return (loss_with(idx, up) - loss_with(idx, dn)) / denom;
      };
      const double fd = (4.0 * central(h / 2) - central(h)) / 3.0;
      const double a = static_cast<double>(analytic.values[idx]);
      const double rel =
          std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1.0e-6});
      max_rel = std::max(max_rel, rel);
    }

    const bool pass = max_rel < 1.0e-4;
    std::cout << json({{"max_rel_error", max_rel},
                       {"coords_checked", coords.size()},
                       {"threshold", 1.0e-4},
                       {"pass", pass}})
                     .dump()
              << "\n";
    return pass ? 0 : 2;
  } catch (const std::exception& e) {
    return fail_json(e.what());
  }
}

}  // namespace flsim
