#include "flsim/federation.hpp"

#include <algorithm>
#include <stdexcept>
#include <variant>

#include "flsim/artifacts.hpp"
#include "flsim/idx.hpp"
#include "flsim/metrics.hpp"
#include "flsim/threading.hpp"
#include "flsim/trigger.hpp"

namespace flsim {
namespace {

void fail(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config: " + field + ": " + why);
}

Dataset build_dataset(const DatasetConfig& cfg, bool test_split) {
  if (cfg.kind == DatasetConfig::Kind::kBlobs) {
    // One pooled draw so both splits share the per-class means; each class
    // block is then sliced into train examples followed by test examples.
    const int per_class = cfg.per_class_train + cfg.per_class_test;
    Dataset pooled = synth_blobs(cfg.num_classes, per_class, cfg.input_shape, cfg.sigma, cfg.seed);
    Dataset split;
    split.num_classes = pooled.num_classes;
    split.input_shape = pooled.input_shape;
    for (int c = 0; c < cfg.num_classes; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * static_cast<std::size_t>(per_class);
      const std::size_t lo = base + (test_split ? static_cast<std::size_t>(cfg.per_class_train) : 0);
      const std::size_t hi = base + (test_split ? static_cast<std::size_t>(per_class)
                                                : static_cast<std::size_t>(cfg.per_class_train));
      for (std::size_t i = lo; i < hi; ++i) split.examples.push_back(std::move(pooled.examples[i]));
    }
    return split;
  }
  return load_idx(test_split ? cfg.test_images : cfg.train_images,
                  test_split ? cfg.test_labels : cfg.train_labels, cfg.idx_num_classes);
}

bool is_adversary(const std::vector<int>& adversary_ids, int pid) {
  return std::binary_search(adversary_ids.begin(), adversary_ids.end(), pid);
}

}  // namespace

void validate_config(const SimConfig& config) {
  if (config.num_participants < 1) fail("num_participants", "must be >= 1");
  if (config.per_round < 1 || config.per_round > config.num_participants) {
    fail("per_round", "must be in [1, num_participants]");
  }
  if (config.rounds < 0) fail("rounds", "must be >= 0");
  if (config.attack_start_round < 0 || config.attack_start_round > config.rounds) {
    fail("attack_start_round", "must be in [0, rounds]");
  }
  if (config.eval_every < 1) fail("eval_every", "must be >= 1");
  if (config.adversary_ids.size() >= static_cast<std::size_t>(config.num_participants)) {
    fail("adversary_ids", "must leave at least one benign participant");
  }
  for (std::size_t i = 0; i < config.adversary_ids.size(); ++i) {
    const int id = config.adversary_ids[i];
    if (id < 0 || id >= config.num_participants) fail("adversary_ids", "id out of range");
    if (i > 0 && id <= config.adversary_ids[i - 1]) {
      fail("adversary_ids", "ids must be strictly ascending");
    }
  }

  if (config.train.epochs < 0) fail("train.epochs", "must be >= 0");
  if (config.train.batch_size < 1) fail("train.batch_size", "must be >= 1");
  if (!(config.train.learning_rate >= 0.0)) fail("train.learning_rate", "must be >= 0");
  if (!(config.train.temperature > 0.0)) fail("train.temperature", "must be > 0");

  const AttackConfig& atk = config.attack;
  if (!(atk.alpha >= 0.0 && atk.alpha <= 1.0)) fail("attack.alpha", "must be in [0, 1]");
  if (!(atk.gamma >= 0.0)) fail("attack.gamma", "must be >= 0");
  if (!(atk.beta >= 0.0)) fail("attack.beta", "must be >= 0");
  if (!(atk.poison_fraction >= 0.0 && atk.poison_fraction <= 1.0)) {
    fail("attack.poison_fraction", "must be in [0, 1]");
  }
  if (atk.trigger.pixels.empty()) fail("attack.trigger", "needs at least one pixel");
  if (atk.dba) {
    if (atk.dba->num_parts < 1) fail("attack.dba.num_parts", "must be >= 1");
    if (static_cast<std::size_t>(atk.dba->num_parts) > atk.trigger.pixels.size()) {
      fail("attack.dba.num_parts", "exceeds trigger pixel count");
    }
    if (atk.dba->part_index < 0 || atk.dba->part_index >= atk.dba->num_parts) {
      fail("attack.dba.part_index", "must be in [0, num_parts)");
    }
  }

  const DefenseConfig& def = config.defense;
  if (!(def.server_lr >= 0.0)) fail("defense.server_lr", "must be >= 0");
  switch (def.rule) {
    case DefenseRule::kFedavg:
      break;
    case DefenseRule::kMultiKrum:
      if (def.f < 0) fail("defense.f", "must be >= 0");
      if (!(2 * def.f + 2 < config.per_round)) {
        fail("defense.f", "multi_krum needs 2f + 2 < per_round");
      }
      if (def.m < 1 || def.m > config.per_round) {
        fail("defense.m", "must be in [1, per_round]");
      }
      break;
    case DefenseRule::kNormClipDp:
      if (!(def.max_norm > 0.0)) fail("defense.max_norm", "must be > 0");
      if (!(def.sigma >= 0.0)) fail("defense.sigma", "must be >= 0");
      break;
    case DefenseRule::kFlame:
      if (!(def.lambda >= 0.0)) fail("defense.lambda", "must be >= 0");
      if (!(def.min_cluster_fraction > 0.0 && def.min_cluster_fraction <= 1.0)) {
        fail("defense.min_cluster_fraction", "must be in (0, 1]");
      }
      if (config.per_round < 3) fail("per_round", "flame needs at least 3 per round");
      break;
  }

  const DatasetConfig& ds = config.dataset;
  if (ds.kind == DatasetConfig::Kind::kBlobs) {
    if (ds.num_classes < 2) fail("dataset.num_classes", "must be >= 2");
    if (ds.per_class_train < 1) fail("dataset.per_class_train", "must be >= 1");
    if (ds.per_class_test < 1) fail("dataset.per_class_test", "must be >= 1");
    if (ds.input_shape.size() != 3) fail("dataset.input_shape", "must be [channels, rows, cols]");
    for (int d : ds.input_shape) {
      if (d < 1) fail("dataset.input_shape", "dimensions must be positive");
    }
    if (!(ds.sigma >= 0.0)) fail("dataset.sigma", "must be >= 0");
  } else {
    if (ds.train_images.empty() || ds.train_labels.empty() || ds.test_images.empty() ||
        ds.test_labels.empty()) {
      fail("dataset", "idx datasets need all four file paths");
    }
    if (ds.idx_num_classes < 0) fail("dataset.idx_num_classes", "must be >= 0");
  }

  if (!(config.partition.alpha > 0.0)) fail("partition.alpha", "must be > 0");
  if (config.model.layers.empty()) fail("model", "no layers");
}

std::vector<int> select_participants(RngStream stream, int num_participants, int per_round,
                                     const std::vector<int>& adversary_ids, bool always_include,
                                     int round, int attack_start_round) {
  if (per_round < 1 || per_round > num_participants) {
    throw std::invalid_argument("select_participants: per_round out of range");
  }
  std::vector<int> forced;
  if (always_include && round >= attack_start_round) forced = adversary_ids;
  if (forced.size() > static_cast<std::size_t>(per_round)) {
    throw std::invalid_argument("select_participants: more forced adversaries than slots");
  }
  std::vector<int> pool;
  pool.reserve(static_cast<std::size_t>(num_participants) - forced.size());
  for (int id = 0; id < num_participants; ++id) {
    if (!is_adversary(forced, id)) pool.push_back(id);
  }
  const std::size_t need = static_cast<std::size_t>(per_round) - forced.size();
  std::vector<int> picked = forced;
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    picked.push_back(pool[i]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

Simulation::Simulation(SimConfig config)
    : config_(std::move(config)),
      net_((validate_config(config_), config_.model)),
      train_(build_dataset(config_.dataset, false)),
      test_(build_dataset(config_.dataset, true)),
      root_(config_.seed) {
  if (train_.input_shape != config_.model.input_shape) {
    throw std::invalid_argument("config: model.input_shape does not match the dataset");
  }
  if (train_.num_classes != config_.model.num_classes) {
    throw std::invalid_argument("config: model.num_classes does not match the dataset");
  }
  if (config_.attack.method != AttackMethod::kBenign && !config_.adversary_ids.empty()) {
    validate_trigger(config_.attack.trigger, train_.input_shape);
  }
  try {
    validate_trigger(config_.attack.trigger, train_.input_shape);
    trigger_fits_data_ = true;
  } catch (const std::exception&) {
    trigger_fits_data_ = false;
  }
  state_.partition = dirichlet_partition(train_, config_.num_participants,
                                         config_.partition.alpha, config_.partition.seed);
  if (!config_.pretrained_path.empty()) {
    state_.params = read_fp32(config_.pretrained_path);
    if (state_.params.values.size() != net_.num_params()) {
      throw std::invalid_argument("config: pretrained_path parameter count mismatch");
    }
    state_.params.layout = net_.layout();
  } else {
    state_.params = net_.init_params(root_.derive(rng_tag::kInit));
  }
}

RoundRecord Simulation::run_round() {
  if (state_.round >= config_.rounds) {
    throw std::logic_error("run_round: simulation already finished");
  }
  const int t = state_.round + 1;
  try {
    std::vector<int> selected =
        select_participants(root_.derive(rng_tag::kSelect, static_cast<std::uint64_t>(t)),
                            config_.num_participants, config_.per_round, config_.adversary_ids,
                            config_.adversary_always_selected, t, config_.attack_start_round);

    const bool attack_active =
        t >= config_.attack_start_round && config_.attack.method != AttackMethod::kBenign;
    std::vector<FlatUpdate> updates(selected.size());
    auto train_one = [&](std::size_t i) {
      const int pid = selected[i];
      AttackConfig cfg;  // benign
      if (attack_active && is_adversary(config_.adversary_ids, pid)) {
        cfg = config_.attack;
        if (cfg.dba) {
          const auto pos = std::lower_bound(config_.adversary_ids.begin(),
                                            config_.adversary_ids.end(), pid) -
                           config_.adversary_ids.begin();
          cfg.dba->part_index = static_cast<int>(pos) % cfg.dba->num_parts;
        }
      }
      RngStream stream = root_.derive(rng_tag::kLocal, static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(pid));
      updates[i] = local_train(net_, state_.params, train_,
                               state_.partition.assignments[static_cast<std::size_t>(pid)], cfg,
                               config_.train, stream);
    };
    parallel_for(selected.size(), worker_pool_size(), train_one);

    UpdateSet set = UpdateSet::create(selected, std::move(updates));
    RngStream defense_rng = root_.derive(rng_tag::kDefense, static_cast<std::uint64_t>(t));
    AggregationOutcome outcome = apply_defense(config_.defense, set, defense_rng);

    for (std::size_t i = 0; i < state_.params.values.size(); ++i) {
      state_.params.values[i] += outcome.aggregate.values[i];
    }

    RoundRecord record;
    record.round = t;
    record.selected_ids = set.participant_ids;
    record.accepted_ids = outcome.accepted_ids;
    record.update_norms = outcome.diagnostics.update_norms;
    record.scores = outcome.diagnostics.scores;
    record.clip_bound = outcome.diagnostics.clip_bound;
    record.noise_sigma = outcome.diagnostics.noise_sigma;

    int accepted_adversaries = 0;
    for (int id : outcome.accepted_ids) {
      if (is_adversary(config_.adversary_ids, id)) ++accepted_adversaries;
    }
    const int prev_cum =
        state_.history.empty() ? 0 : state_.history.back().adversary_selected_cum;
    record.adversary_selected_cum = prev_cum + accepted_adversaries;

    record.evaluated = (t % config_.eval_every == 0) || t == config_.rounds;
    if (record.evaluated) {
      record.accuracy = test_accuracy(net_, state_.params, test_);
      if (trigger_fits_data_) {
        record.has_asr = true;
        record.asr = attack_success_rate(net_, state_.params, test_, config_.attack.trigger);
      }
    }

    state_.round = t;
    state_.history.push_back(record);
    if (observer_) observer_(record, set, state_.params);
    return record;
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("round " + std::to_string(t) + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
  }
}

std::vector<RoundRecord> Simulation::run_all() {
  while (state_.round < config_.rounds) run_round();
  return state_.history;
}

std::vector<RoundRecord> run_simulation(const SimConfig& config) {
  Simulation sim(config);
  return sim.run_all();
}

}  // namespace flsim
