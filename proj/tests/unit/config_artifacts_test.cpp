#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "flsim/artifacts.hpp"
#include "flsim/config.hpp"
#include "flsim/federation.hpp"
#include "support/test_util.hpp"

namespace flsim {
namespace {

using testutil::TempDir;
using testutil::tiny_cnn;

constexpr const char* kMinimal = R"({"seed": 5, "dataset": {}})";

void expect_parse_error(const std::string& text, const std::string& needle,
                        const std::vector<std::string>& overrides = {}) {
  try {
    parse_config_text(text, overrides);
    FAIL() << "expected rejection mentioning " << needle;
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Config, MinimalTextFillsDefaults) {
  SimConfig cfg = parse_config_text(kMinimal);
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.num_participants, 100);
  EXPECT_EQ(cfg.per_round, 12);
  EXPECT_EQ(cfg.rounds, 50);
  EXPECT_EQ(cfg.attack_start_round, 10);
  EXPECT_EQ(cfg.eval_every, 1);
  EXPECT_TRUE(cfg.adversary_always_selected);
  EXPECT_FALSE(cfg.save_updates);
  EXPECT_TRUE(cfg.adversary_ids.empty());
  EXPECT_EQ(cfg.partition.seed, 5u);  // defaults to the simulation seed
  EXPECT_EQ(cfg.partition.alpha, 0.5);
  EXPECT_EQ(cfg.attack.method, AttackMethod::kBenign);
  EXPECT_EQ(cfg.attack.trigger.pixels.size(), 6u);
  EXPECT_EQ(cfg.defense.rule, DefenseRule::kFedavg);
  EXPECT_EQ(cfg.dataset.kind, DatasetConfig::Kind::kBlobs);
  EXPECT_EQ(cfg.dataset.input_shape, (std::vector<int>{1, 16, 16}));
  // A blobs config without a model gets the stock CNN shaped to the dataset.
  EXPECT_EQ(cfg.model.input_shape, (std::vector<int>{1, 16, 16}));
  EXPECT_EQ(cfg.model.num_classes, 10);
  EXPECT_EQ(cfg.model.layers.size(), 10u);
}

TEST(Config, SeedAndDatasetAreRequired) {
  expect_parse_error(R"({"dataset": {}})", "/seed");
  expect_parse_error(R"({"seed": 1})", "/dataset");
  expect_parse_error("not json at all", "not valid JSON");
  expect_parse_error("[1, 2]", "expected an object");
}

TEST(Config, UnknownKeysAreNamedByPointer) {
  expect_parse_error(R"({"seed": 1, "dataset": {}, "bogus": 2})", "/bogus");
  expect_parse_error(R"({"seed": 1, "dataset": {}, "attack": {"foo": 1}})",
                     "config: /attack/foo: unknown key");
  expect_parse_error(
      R"({"seed": 1, "dataset": {}, "attack": {"trigger": {"pixels": [{"row": 0, "col": 0, "oops": 1}]}}})",
      "/attack/trigger/pixels/0/oops");
  expect_parse_error(R"({"seed": 1, "dataset": {}, "train": {"epochs": "three"}})",
                     "/train/epochs: wrong type");
  expect_parse_error(R"({"seed": 1, "dataset": {}, "attack": {"method": "outlandish"}})",
                     "/attack/method");
  expect_parse_error(R"({"seed": 1, "dataset": {}, "model": {"input_shape": [4], "num_classes": 2,
                        "layers": [{"type": "warp"}]})"
                         "}",
                     "unknown layer type");
}

TEST(Config, OverridesApplyBeforeDefaultsAndValidation) {
  SimConfig cfg = parse_config_text(
      kMinimal, {"rounds=3", "attack.method=advkd_reg", "attack.alpha=0.7",
                 "train.learning_rate=0.05", "pretrained_path=warm/start.fp32"});
  EXPECT_EQ(cfg.rounds, 3);
  EXPECT_EQ(cfg.attack_start_round, 3);  // min(10, rounds) after overrides
  EXPECT_EQ(cfg.attack.method, AttackMethod::kAdvkdReg);
  EXPECT_EQ(cfg.attack.alpha, 0.7);
  EXPECT_EQ(cfg.train.learning_rate, 0.05);
  EXPECT_EQ(cfg.pretrained_path, "warm/start.fp32");  // bare words become strings
  // An attack without explicit adversaries defaults to participant 0.
  EXPECT_EQ(cfg.adversary_ids, (std::vector<int>{0}));

  expect_parse_error(kMinimal, "defense/bogus", {"defense.bogus=1"});
  EXPECT_THROW(parse_config_text(kMinimal, {"noequals"}), std::invalid_argument);
  EXPECT_THROW(parse_config_text(kMinimal, {"seed.x=1"}), std::invalid_argument);
}

TEST(Config, MultiKrumKeepCountDefaultsToCohortMinusF) {
  SimConfig cfg = parse_config_text(
      R"({"seed": 1, "dataset": {}, "per_round": 8, "defense": {"rule": "multi_krum", "f": 2}})");
  EXPECT_EQ(cfg.defense.rule, DefenseRule::kMultiKrum);
  EXPECT_EQ(cfg.defense.m, 6);
}

TEST(Config, SerializeRoundTrips) {
  SimConfig cfg = parse_config_text(
      kMinimal,
      {"num_participants=10", "per_round=6", "rounds=4", "adversary_ids=[3,5]",
       "attack.method=advkd_enh", "attack.dba={\"num_parts\":2}",
       "defense.rule=multi_krum", "defense.f=1", "defense.m=3", "partition.alpha=0.9"});
  const std::string text = serialize_config(cfg);
  SimConfig again = parse_config_text(text);
  EXPECT_EQ(serialize_config(again), text);
  EXPECT_EQ(again.adversary_ids, cfg.adversary_ids);
  EXPECT_EQ(again.attack.method, AttackMethod::kAdvkdEnh);
  ASSERT_TRUE(again.attack.dba.has_value());
  EXPECT_EQ(again.attack.dba->num_parts, 2);
  EXPECT_EQ(again.defense.m, 3);
  EXPECT_EQ(again.partition.alpha, 0.9);
  EXPECT_EQ(again.attack.trigger.pixels.size(), cfg.attack.trigger.pixels.size());
}

TEST(Config, FileAndTextAgree) {
  TempDir dir("artifacts");
  const std::string path = dir.file("experiment.json");
  write_text_file(path, kMinimal);
  SimConfig from_file = parse_config_file(path);
  SimConfig from_text = parse_config_text(kMinimal);
  EXPECT_EQ(serialize_config(from_file), serialize_config(from_text));
  EXPECT_THROW(parse_config_file(dir.file("missing.json")), std::runtime_error);
}

TEST(FormatDouble, ShortestRoundTrippingForm) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(0.0), "0");
  EXPECT_EQ(format_double(-2.25), "-2.25");
  EXPECT_EQ(format_double(0.001), "0.001");
  EXPECT_EQ(format_float(0.25f), "0.25");

  RngStream rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-12, 12));
    const std::string text = format_double(v);
    EXPECT_EQ(std::strtod(text.c_str(), nullptr), v) << text;
  }
}

TEST(Fp32, RoundTripsValuesAndLayout) {
  TempDir dir("artifacts");
  Network net(tiny_cnn({1, 6, 6}, 3));
  RngStream rng(7);
  FlatParams params = net.init_params(rng.derive(1));
  const std::string path = dir.file("model.fp32");
  write_fp32(path, params);
  FlatParams loaded = read_fp32(path);
  EXPECT_EQ(loaded.values, params.values);
  ASSERT_TRUE(loaded.layout != nullptr);
  EXPECT_TRUE(layouts_compatible(*loaded.layout, *params.layout));
  EXPECT_EQ(loaded.layout->total_count, params.layout->total_count);

  FlatParams bare;
  bare.values = {1.0f};
  EXPECT_THROW(write_fp32(dir.file("bare.fp32"), bare), std::invalid_argument);
}

TEST(Fp32, RejectsTruncationAndBadHeaders) {
  TempDir dir("artifacts");
  Network net(tiny_cnn({1, 6, 6}, 2));
  FlatParams params = net.zero_params();
  const std::string path = dir.file("model.fp32");
  write_fp32(path, params);

  const std::string blob = read_text_file(path);
  const std::string clipped = dir.file("clipped.fp32");
  write_text_file(clipped, blob.substr(0, blob.size() - 4));
  try {
    read_fp32(clipped);
    FAIL() << "expected a size complaint";
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("expected"), std::string::npos) << what;
    EXPECT_NE(what.find("bytes, found"), std::string::npos) << what;
  }

  const std::string headerless = dir.file("headerless.fp32");
  write_text_file(headerless, "no newline here");
  EXPECT_THROW(read_fp32(headerless), std::runtime_error);

  const std::string liar = dir.file("liar.fp32");
  write_text_file(liar, R"({"count": 3, "segments": [{"layer_index": 0, "role": "bias", "shape": [2]}]})"
                        "\n\0\0\0\0\0\0\0\0");
  EXPECT_THROW(read_fp32(liar), std::runtime_error);
}

TEST(Updates, RoundTripBitExact) {
  TempDir dir("artifacts");
  UpdateSet set = testutil::make_set(
      {{0.5f, -1.25f, 3.0f}, {0.0f, 2.5f, -0.125f}, {1e-7f, -1e7f, 0.75f}}, {4, 9, 2});
  const std::string path = dir.file("updates.bin");
  write_updates(path, set);
  UpdateSet loaded = read_updates(path);
  EXPECT_EQ(loaded.participant_ids, set.participant_ids);
  ASSERT_EQ(loaded.updates.size(), set.updates.size());
  for (std::size_t i = 0; i < set.updates.size(); ++i) {
    EXPECT_EQ(loaded.updates[i].values, set.updates[i].values);
  }
}

TEST(MetricsCsv, HeaderAndRowShapes) {
  EXPECT_EQ(metrics_csv_header(),
            "round,asr,accuracy,adversary_selected_cum,accepted_count,clip_bound,noise_sigma\n");

  RoundRecord sparse;
  sparse.round = 3;
  sparse.adversary_selected_cum = 2;
  sparse.accepted_ids = {1, 2, 3};
  EXPECT_EQ(metrics_csv_row(sparse), "3,,,2,3,,\n");

  RoundRecord full;
  full.round = 1;
  full.evaluated = true;
  full.has_asr = true;
  full.asr = 0.5;
  full.accuracy = 0.25;
  full.clip_bound = 1.5;
  full.noise_sigma = 0.001;
  EXPECT_EQ(metrics_csv_row(full), "1,0.5,0.25,0,0,1.5,0.001\n");

  TempDir dir("artifacts");
  const std::string path = dir.file("metrics.csv");
  write_metrics_csv(path, {full, sparse});
  EXPECT_EQ(read_text_file(path), metrics_csv_header() + metrics_csv_row(full) +
                                      metrics_csv_row(sparse));
}

TEST(RoundRecordJson, EmitsPresentFieldsOnly) {
  RoundRecord rec;
  rec.round = 2;
  rec.selected_ids = {1, 3};
  rec.accepted_ids = {3};
  rec.update_norms = {0.5, 1.5};
  rec.evaluated = true;
  rec.accuracy = 0.75;
  rec.scores = std::vector<double>{0.1, 0.2};
  const std::string text = round_record_json(rec);
  nlohmann::json j = nlohmann::json::parse(text);
  EXPECT_EQ(j.at("round"), 2);
  EXPECT_EQ(j.at("selected_ids"), (std::vector<int>{1, 3}));
  EXPECT_EQ(j.at("accepted_ids"), (std::vector<int>{3}));
  EXPECT_EQ(j.at("accuracy"), 0.75);
  EXPECT_EQ(j.at("scores"), (std::vector<double>{0.1, 0.2}));
  EXPECT_FALSE(j.contains("asr"));
  EXPECT_FALSE(j.contains("clip_bound"));

  RoundRecord blank;
  blank.round = 1;
  nlohmann::json jb = nlohmann::json::parse(round_record_json(blank));
  EXPECT_FALSE(jb.contains("accuracy"));
  EXPECT_EQ(jb.at("evaluated"), false);
}

TEST(DistanceMatrixCsv, HeaderRowThenValues) {
  DistanceMatrix m;
  m.n = 2;
  m.values = {0.0, 1.5, 1.5, 0.0};
  EXPECT_EQ(distance_matrix_csv(m, {7, 9}), "7,9\n0,1.5\n1.5,0\n");
  EXPECT_THROW(distance_matrix_csv(m, {7}), std::invalid_argument);
}

TEST(GainReportCsv, RowsInReportOrder) {
  GainReport report;
  report.entries = {{3, -0.5, 1.0}, {1, 0.25, -2.0}};
  EXPECT_EQ(gain_report_csv(report),
            "participant_id,update_gain,update_sign_gain\n3,-0.5,1\n1,0.25,-2\n");
}

TEST(ActivationPgm, NormalizesPerChannel) {
  TempDir dir("artifacts");
  ActivationGrid grid;
  grid.layer_index = 2;
  grid.class_label = 1;
  grid.mean = DenseTensor::zeros({2, 2, 3});
  grid.mean.values = {0.0f, 0.5f, 1.0f, 0.25f, 0.75f, 1.0f,  // channel 0
                      0.0f, 0.0f, 0.0f, 0.0f,  0.0f,  0.0f}; // channel 1: flat
  std::vector<std::string> paths = write_activation_pgms(dir.file("grid"), grid);
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0], dir.file("grid_c0.pgm"));
  EXPECT_EQ(paths[1], dir.file("grid_c1.pgm"));
  EXPECT_EQ(read_text_file(paths[0]), "P2\n3 2\n255\n0 128 255\n64 191 255\n");
  EXPECT_EQ(read_text_file(paths[1]), "P2\n3 2\n255\n0 0 0\n0 0 0\n");

  ActivationGrid flat;
  flat.mean = DenseTensor::zeros({4});
  EXPECT_THROW(write_activation_pgms(dir.file("flat"), flat), std::invalid_argument);
}

TEST(ActivationCsv, OneRowPerCell) {
  ActivationGrid grid;
  grid.mean = DenseTensor::zeros({1, 2, 2});
  grid.mean.values = {0.0f, 0.5f, 0.25f, 1.0f};
  EXPECT_EQ(activation_grid_csv(grid),
            "channel,row,col,value\n0,0,0,0\n0,0,1,0.5\n0,1,0,0.25\n0,1,1,1\n");
}

TEST(Pretrained, SimulationStartsFromSavedParams) {
  TempDir dir("artifacts");
  SimConfig cfg;
  cfg.seed = 11;
  cfg.num_participants = 2;
  cfg.per_round = 2;
  cfg.rounds = 1;
  cfg.attack_start_round = 1;
  cfg.model = tiny_cnn({1, 6, 6}, 3);
  cfg.dataset.num_classes = 3;
  cfg.dataset.per_class_train = 4;
  cfg.dataset.per_class_test = 2;
  cfg.dataset.input_shape = {1, 6, 6};
  cfg.dataset.seed = 3;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 4;

  Network net(tiny_cnn({1, 6, 6}, 3));
  RngStream rng(999);
  FlatParams warm = net.init_params(rng.derive(2));
  const std::string path = dir.file("warm.fp32");
  write_fp32(path, warm);

  cfg.pretrained_path = path;
  Simulation sim(cfg);
  EXPECT_EQ(sim.state().params.values, warm.values);

  Network small(tiny_cnn({1, 6, 6}, 2));
  const std::string wrong = dir.file("wrong.fp32");
  write_fp32(wrong, small.zero_params());
  cfg.pretrained_path = wrong;
  EXPECT_THROW(Simulation{cfg}, std::invalid_argument);
}

}  // namespace
}  // namespace flsim
