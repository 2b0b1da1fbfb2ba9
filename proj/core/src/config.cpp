#include "flsim/config.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "flsim/artifacts.hpp"

namespace flsim {
namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& pointer, const std::string& why) {
  throw std::invalid_argument("config: " + (pointer.empty() ? std::string("/") : pointer) +
                              ": " + why);
}

void expect_object(const json& j, const std::string& pointer) {
  if (!j.is_object()) bad(pointer, "expected an object");
}

void check_keys(const json& j, const std::string& pointer, const std::set<std::string>& allowed) {
  expect_object(j, pointer);
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) bad(pointer + "/" + item.key(), "unknown key");
  }
}

template <typename T>
T read_or(const json& j, const std::string& pointer, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(pointer + "/" + key, "wrong type");
  }
}

template <typename T>
T read_required(const json& j, const std::string& pointer, const std::string& key) {
  if (!j.contains(key)) bad(pointer + "/" + key, "required key missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(pointer + "/" + key, "wrong type");
  }
}

TriggerSpec parse_trigger(const json& j, const std::string& pointer) {
  check_keys(j, pointer, {"target_class", "pixels"});
  TriggerSpec trigger = make_default_trigger();
  trigger.target_class = read_or<int>(j, pointer, "target_class", trigger.target_class);
  if (j.contains("pixels")) {
    if (!j.at("pixels").is_array()) bad(pointer + "/pixels", "expected an array");
    trigger.pixels.clear();
    std::size_t idx = 0;
    for (const auto& pj : j.at("pixels")) {
      const std::string pp = pointer + "/pixels/" + std::to_string(idx++);
      check_keys(pj, pp, {"row", "col", "channel", "value"});
      TriggerPixel px;
      px.row = read_required<int>(pj, pp, "row");
      px.col = read_required<int>(pj, pp, "col");
      px.channel = read_or<int>(pj, pp, "channel", 0);
      px.value = read_or<float>(pj, pp, "value", 1.0f);
      trigger.pixels.push_back(px);
    }
  }
  return trigger;
}

ModelSpec parse_model(const json& j, const std::string& pointer) {
  check_keys(j, pointer, {"input_shape", "num_classes", "layers"});
  ModelSpec spec;
  spec.input_shape = read_required<std::vector<int>>(j, pointer, "input_shape");
  spec.num_classes = read_required<int>(j, pointer, "num_classes");
  if (!j.contains("layers") || !j.at("layers").is_array()) {
    bad(pointer + "/layers", "expected an array");
  }
  std::size_t idx = 0;
  for (const auto& lj : j.at("layers")) {
    const std::string lp = pointer + "/layers/" + std::to_string(idx++);
    expect_object(lj, lp);
    const std::string type = read_required<std::string>(lj, lp, "type");
    if (type == "conv2d") {
      check_keys(lj, lp, {"type", "out_channels", "kernel_h", "kernel_w", "stride"});
      Conv2dSpec conv;
      conv.out_channels = read_required<int>(lj, lp, "out_channels");
      conv.kernel_h = read_or<int>(lj, lp, "kernel_h", 1);
      conv.kernel_w = read_or<int>(lj, lp, "kernel_w", conv.kernel_h);
      conv.stride = read_or<int>(lj, lp, "stride", 1);
      spec.layers.emplace_back(conv);
    } else if (type == "max_pool") {
      check_keys(lj, lp, {"type", "size"});
      MaxPoolSpec pool;
      pool.size = read_or<int>(lj, lp, "size", 2);
      spec.layers.emplace_back(pool);
    } else if (type == "relu") {
      check_keys(lj, lp, {"type"});
      spec.layers.emplace_back(ReluSpec{});
    } else if (type == "flatten") {
      check_keys(lj, lp, {"type"});
      spec.layers.emplace_back(FlattenSpec{});
    } else if (type == "dense") {
      check_keys(lj, lp, {"type", "out_features"});
      DenseSpec dense;
      dense.out_features = read_required<int>(lj, lp, "out_features");
      spec.layers.emplace_back(dense);
    } else {
      bad(lp + "/type", "unknown layer type '" + type + "'");
    }
  }
  return spec;
}

json trigger_to_json(const TriggerSpec& trigger) {
  json pixels = json::array();
  for (const auto& px : trigger.pixels) {
    pixels.push_back(
        {{"row", px.row}, {"col", px.col}, {"channel", px.channel}, {"value", px.value}});
  }
  return {{"target_class", trigger.target_class}, {"pixels", pixels}};
}

json model_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& layer : spec.layers) {
    if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      layers.push_back({{"type", "conv2d"},
                        {"out_channels", conv->out_channels},
                        {"kernel_h", conv->kernel_h},
                        {"kernel_w", conv->kernel_w},
                        {"stride", conv->stride}});
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&layer)) {
      layers.push_back({{"type", "max_pool"}, {"size", pool->size}});
    } else if (std::holds_alternative<ReluSpec>(layer)) {
      layers.push_back({{"type", "relu"}});
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      layers.push_back({{"type", "flatten"}});
    } else if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
      layers.push_back({{"type", "dense"}, {"out_features", dense->out_features}});
    }
  }
  return {{"input_shape", spec.input_shape},
          {"num_classes", spec.num_classes},
          {"layers", layers}};
}

void apply_override(json& doc, const std::string& override_text) {
  const std::size_t eq = override_text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + override_text + "' is not of the form key=value");
  }
  const std::string path = override_text.substr(0, eq);
  const std::string value_text = override_text.substr(eq + 1);
  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::exception&) {
    value = value_text;  // bare words become strings
  }
  json* node = &doc;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const std::size_t dot = path.find('.', start);
    parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw std::invalid_argument("override '" + path + "' has an empty segment");
    if (!node->is_object()) {
      throw std::invalid_argument("override '" + path + "' descends into a non-object");
    }
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (parts.back().empty()) {
    throw std::invalid_argument("override '" + path + "' has an empty segment");
  }
  if (!node->is_object()) {
    throw std::invalid_argument("override '" + path + "' descends into a non-object");
  }
  (*node)[parts.back()] = value;
}

}  // namespace

SimConfig parse_config_text(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  expect_object(doc, "");
  for (const auto& override_text : overrides) apply_override(doc, override_text);

  check_keys(doc, "",
             {"seed", "num_participants", "per_round", "rounds", "attack_start_round",
              "adversary_ids", "adversary_always_selected", "eval_every", "save_updates",
              "pretrained_path", "dataset", "model", "train", "attack", "defense", "partition"});

  SimConfig cfg;
  cfg.seed = read_required<std::uint64_t>(doc, "", "seed");
  cfg.num_participants = read_or<int>(doc, "", "num_participants", cfg.num_participants);
  cfg.per_round = read_or<int>(doc, "", "per_round", cfg.per_round);
  cfg.rounds = read_or<int>(doc, "", "rounds", cfg.rounds);
  cfg.attack_start_round =
      read_or<int>(doc, "", "attack_start_round", std::min(10, cfg.rounds));
  cfg.adversary_always_selected =
      read_or<bool>(doc, "", "adversary_always_selected", cfg.adversary_always_selected);
  cfg.eval_every = read_or<int>(doc, "", "eval_every", cfg.eval_every);
  cfg.save_updates = read_or<bool>(doc, "", "save_updates", cfg.save_updates);
  cfg.pretrained_path = read_or<std::string>(doc, "", "pretrained_path", cfg.pretrained_path);

  if (!doc.contains("dataset")) bad("/dataset", "required key missing");
  {
    const json& dj = doc.at("dataset");
    const std::string dp = "/dataset";
    check_keys(dj, dp,
               {"kind", "num_classes", "per_class_train", "per_class_test", "input_shape",
                "sigma", "seed", "train_images", "train_labels", "test_images", "test_labels",
                "idx_num_classes"});
    DatasetConfig& ds = cfg.dataset;
    const std::string kind = read_or<std::string>(dj, dp, "kind", "blobs");
    if (kind == "blobs") {
      ds.kind = DatasetConfig::Kind::kBlobs;
    } else if (kind == "idx") {
      ds.kind = DatasetConfig::Kind::kIdx;
    } else {
      bad(dp + "/kind", "must be 'blobs' or 'idx'");
    }
    ds.num_classes = read_or<int>(dj, dp, "num_classes", ds.num_classes);
    ds.per_class_train = read_or<int>(dj, dp, "per_class_train", ds.per_class_train);
    ds.per_class_test = read_or<int>(dj, dp, "per_class_test", ds.per_class_test);
    ds.input_shape = read_or<std::vector<int>>(dj, dp, "input_shape", ds.input_shape);
    ds.sigma = read_or<double>(dj, dp, "sigma", ds.sigma);
    ds.seed = read_or<std::uint64_t>(dj, dp, "seed", ds.seed);
    ds.train_images = read_or<std::string>(dj, dp, "train_images", "");
    ds.train_labels = read_or<std::string>(dj, dp, "train_labels", "");
    ds.test_images = read_or<std::string>(dj, dp, "test_images", "");
    ds.test_labels = read_or<std::string>(dj, dp, "test_labels", "");
    ds.idx_num_classes = read_or<int>(dj, dp, "idx_num_classes", 0);
  }

  if (doc.contains("train")) {
    const json& tj = doc.at("train");
    const std::string tp = "/train";
    check_keys(tj, tp, {"epochs", "batch_size", "learning_rate", "temperature"});
    cfg.train.epochs = read_or<int>(tj, tp, "epochs", cfg.train.epochs);
    cfg.train.batch_size = read_or<int>(tj, tp, "batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = read_or<double>(tj, tp, "learning_rate", cfg.train.learning_rate);
    cfg.train.temperature = read_or<double>(tj, tp, "temperature", cfg.train.temperature);
  }

  if (doc.contains("attack")) {
    const json& aj = doc.at("attack");
    const std::string ap = "/attack";
    check_keys(aj, ap,
               {"method", "alpha", "gamma", "beta", "poison_fraction", "trigger", "dba"});
    AttackConfig& atk = cfg.attack;
    if (aj.contains("method")) {
      try {
        atk.method = attack_method_from_name(aj.at("method").get<std::string>());
      } catch (const json::exception&) {
        bad(ap + "/method", "wrong type");
      } catch (const std::invalid_argument& e) {
        bad(ap + "/method", e.what());
      }
    }
    atk.alpha = read_or<double>(aj, ap, "alpha", atk.alpha);
    atk.gamma = read_or<double>(aj, ap, "gamma", atk.gamma);
    atk.beta = read_or<double>(aj, ap, "beta", atk.beta);
    atk.poison_fraction = read_or<double>(aj, ap, "poison_fraction", atk.poison_fraction);
    if (aj.contains("trigger")) atk.trigger = parse_trigger(aj.at("trigger"), ap + "/trigger");
    if (aj.contains("dba")) {
      const json& bj = aj.at("dba");
      const std::string bp = ap + "/dba";
      check_keys(bj, bp, {"num_parts"});
      DbaConfig dba;
      dba.num_parts = read_or<int>(bj, bp, "num_parts", dba.num_parts);
      dba.part_index = 0;  // assigned per adversary by the engine
      atk.dba = dba;
    }
  }

  if (doc.contains("defense")) {
    const json& fj = doc.at("defense");
    const std::string fp = "/defense";
    check_keys(fj, fp,
               {"rule", "server_lr", "f", "m", "krum_squared", "max_norm", "sigma", "lambda",
                "min_cluster_fraction"});
    DefenseConfig& def = cfg.defense;
    if (fj.contains("rule")) {
      try {
        def.rule = defense_rule_from_name(fj.at("rule").get<std::string>());
      } catch (const json::exception&) {
        bad(fp + "/rule", "wrong type");
      } catch (const std::invalid_argument& e) {
        bad(fp + "/rule", e.what());
      }
    }
    def.server_lr = read_or<double>(fj, fp, "server_lr", def.server_lr);
    def.f = read_or<int>(fj, fp, "f", def.f);
    def.m = read_or<int>(fj, fp, "m",
                         def.rule == DefenseRule::kMultiKrum ? cfg.per_round - def.f : def.m);
    def.krum_squared = read_or<bool>(fj, fp, "krum_squared", def.krum_squared);
    def.max_norm = read_or<double>(fj, fp, "max_norm", def.max_norm);
    def.sigma = read_or<double>(fj, fp, "sigma", def.sigma);
    def.lambda = read_or<double>(fj, fp, "lambda", def.lambda);
    def.min_cluster_fraction =
        read_or<double>(fj, fp, "min_cluster_fraction", def.min_cluster_fraction);
  }

  if (doc.contains("partition")) {
    const json& pj = doc.at("partition");
    const std::string pp = "/partition";
    check_keys(pj, pp, {"alpha", "seed"});
    cfg.partition.alpha = read_or<double>(pj, pp, "alpha", cfg.partition.alpha);
    cfg.partition.seed = read_or<std::uint64_t>(pj, pp, "seed", cfg.seed);
  } else {
    cfg.partition.seed = cfg.seed;
  }

  if (doc.contains("adversary_ids")) {
    cfg.adversary_ids = read_or<std::vector<int>>(doc, "", "adversary_ids", std::vector<int>{});
    std::sort(cfg.adversary_ids.begin(), cfg.adversary_ids.end());
  } else if (cfg.attack.method != AttackMethod::kBenign) {
    const int count = cfg.attack.dba ? cfg.attack.dba->num_parts : 1;
    for (int id = 0; id < count; ++id) cfg.adversary_ids.push_back(id);
  }

  if (doc.contains("model")) {
    cfg.model = parse_model(doc.at("model"), "/model");
  } else if (cfg.dataset.kind == DatasetConfig::Kind::kBlobs) {
    cfg.model = make_default_cnn(cfg.dataset.input_shape, cfg.dataset.num_classes);
  } else {
    bad("/model", "required for idx datasets (input shape is not known up front)");
  }

  validate_config(cfg);
  return cfg;
}

SimConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides) {
  return parse_config_text(read_text_file(path), overrides);
}

std::string serialize_config(const SimConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["num_participants"] = cfg.num_participants;
  doc["per_round"] = cfg.per_round;
  doc["rounds"] = cfg.rounds;
  doc["attack_start_round"] = cfg.attack_start_round;
  doc["adversary_ids"] = cfg.adversary_ids;
  doc["adversary_always_selected"] = cfg.adversary_always_selected;
  doc["eval_every"] = cfg.eval_every;
  doc["save_updates"] = cfg.save_updates;
  doc["pretrained_path"] = cfg.pretrained_path;

  json dj;
  const DatasetConfig& ds = cfg.dataset;
  dj["kind"] = ds.kind == DatasetConfig::Kind::kBlobs ? "blobs" : "idx";
  dj["num_classes"] = ds.num_classes;
  dj["per_class_train"] = ds.per_class_train;
  dj["per_class_test"] = ds.per_class_test;
  dj["input_shape"] = ds.input_shape;
  dj["sigma"] = ds.sigma;
  dj["seed"] = ds.seed;
  dj["train_images"] = ds.train_images;
  dj["train_labels"] = ds.train_labels;
  dj["test_images"] = ds.test_images;
  dj["test_labels"] = ds.test_labels;
  dj["idx_num_classes"] = ds.idx_num_classes;
  doc["dataset"] = dj;

  doc["model"] = model_to_json(cfg.model);

  doc["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"temperature", cfg.train.temperature}};

  json aj;
  aj["method"] = attack_method_name(cfg.attack.method);
  aj["alpha"] = cfg.attack.alpha;
  aj["gamma"] = cfg.attack.gamma;
  aj["beta"] = cfg.attack.beta;
  aj["poison_fraction"] = cfg.attack.poison_fraction;
  aj["trigger"] = trigger_to_json(cfg.attack.trigger);
  if (cfg.attack.dba) aj["dba"] = {{"num_parts", cfg.attack.dba->num_parts}};
  doc["attack"] = aj;

  doc["defense"] = {{"rule", defense_rule_name(cfg.defense.rule)},
                    {"server_lr", cfg.defense.server_lr},
                    {"f", cfg.defense.f},
                    {"m", cfg.defense.m},
                    {"krum_squared", cfg.defense.krum_squared},
                    {"max_norm", cfg.defense.max_norm},
                    {"sigma", cfg.defense.sigma},
                    {"lambda", cfg.defense.lambda},
                    {"min_cluster_fraction", cfg.defense.min_cluster_fraction}};

  doc["partition"] = {{"alpha", cfg.partition.alpha}, {"seed", cfg.partition.seed}};

  return doc.dump(2) + "\n";
}

}  // namespace flsim
