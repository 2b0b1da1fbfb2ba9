#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "flsim/dataset.hpp"
#include "flsim/idx.hpp"
#include "flsim/partition.hpp"
#include "flsim/trigger.hpp"
#include "support/test_util.hpp"

namespace flsim {
namespace {

using testutil::TempDir;

// ---------------------------------------------------------------- blobs

TEST(Blobs, CountsAndLabels) {
  Dataset ds = synth_blobs(2, 5, {1, 4, 4}, 0.1, 3);
  ASSERT_EQ(ds.size(), 10u);
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.input_shape, (std::vector<int>{1, 4, 4}));
  int zeros = 0, ones = 0;
  for (const auto& ex : ds.examples) {
    if (ex.label == 0) ++zeros;
    if (ex.label == 1) ++ones;
    for (float v : ex.input.values) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_EQ(zeros, 5);
  EXPECT_EQ(ones, 5);
}

TEST(Blobs, SeedDeterminism) {
  Dataset a = synth_blobs(3, 4, {1, 3, 3}, 0.2, 7);
  Dataset b = synth_blobs(3, 4, {1, 3, 3}, 0.2, 7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].label, b.examples[i].label);
    EXPECT_EQ(a.examples[i].input.values, b.examples[i].input.values);
  }
  Dataset c = synth_blobs(3, 4, {1, 3, 3}, 0.2, 8);
  EXPECT_NE(a.examples[0].input.values, c.examples[0].input.values);
}

// ---------------------------------------------------------------- idx

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> idx_images_header(std::uint32_t n, std::uint32_t rows,
                                             std::uint32_t cols) {
  std::vector<unsigned char> b{0, 0, 8, 3};
  for (std::uint32_t v : {n, rows, cols}) {
    b.push_back(static_cast<unsigned char>(v >> 24));
    b.push_back(static_cast<unsigned char>(v >> 16));
    b.push_back(static_cast<unsigned char>(v >> 8));
    b.push_back(static_cast<unsigned char>(v));
  }
  return b;
}

std::vector<unsigned char> idx_labels_header(std::uint32_t n) {
  std::vector<unsigned char> b{0, 0, 8, 1};
  b.push_back(static_cast<unsigned char>(n >> 24));
  b.push_back(static_cast<unsigned char>(n >> 16));
  b.push_back(static_cast<unsigned char>(n >> 8));
  b.push_back(static_cast<unsigned char>(n));
  return b;
}

TEST(Idx, TwoImageFixtureRoundTrips) {
  TempDir dir("idx");
  auto img = idx_images_header(2, 2, 2);
  for (unsigned char px : {0, 51, 102, 153, 204, 255, 10, 20}) img.push_back(px);
  auto lab = idx_labels_header(2);
  lab.push_back(1);
  lab.push_back(0);
  write_bytes(dir.file("img"), img);
  write_bytes(dir.file("lab"), lab);

  Dataset ds = load_idx(dir.file("img"), dir.file("lab"));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.input_shape, (std::vector<int>{1, 2, 2}));
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.examples[0].label, 1);
  EXPECT_EQ(ds.examples[1].label, 0);
  EXPECT_FLOAT_EQ(ds.examples[0].input.values[1], 51.0f / 255.0f);
  EXPECT_FLOAT_EQ(ds.examples[1].input.values[3], 20.0f / 255.0f);
}

TEST(Idx, EmptyWellFormedPair) {
  TempDir dir("idx");
  write_bytes(dir.file("img"), idx_images_header(0, 2, 2));
  write_bytes(dir.file("lab"), idx_labels_header(0));
  Dataset ds = load_idx(dir.file("img"), dir.file("lab"));
  EXPECT_EQ(ds.size(), 0u);
}

TEST(Idx, RejectsBadMagic) {
  TempDir dir("idx");
  auto img = idx_images_header(0, 2, 2);
  img[3] = 9;  // wrong type code
  write_bytes(dir.file("img"), img);
  write_bytes(dir.file("lab"), idx_labels_header(0));
  try {
    load_idx(dir.file("img"), dir.file("lab"));
    FAIL() << "expected rejection";
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("magic"), std::string::npos) << msg;
    EXPECT_NE(msg.find(dir.file("img")), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte 0"), std::string::npos) << msg;
  }
}

TEST(Idx, RejectsTruncatedPixels) {
  TempDir dir("idx");
  auto img = idx_images_header(2, 2, 2);
  for (unsigned char px : {1, 2, 3}) img.push_back(px);  // 3 of 8 bytes
  write_bytes(dir.file("img"), img);
  write_bytes(dir.file("lab"), idx_labels_header(2));
  EXPECT_THROW(load_idx(dir.file("img"), dir.file("lab")), std::exception);
}

TEST(Idx, RejectsTrailingBytes) {
  TempDir dir("idx");
  auto img = idx_images_header(1, 1, 1);
  img.push_back(5);
  img.push_back(6);  // one byte too many
  write_bytes(dir.file("img"), img);
  auto lab = idx_labels_header(1);
  lab.push_back(0);
  write_bytes(dir.file("lab"), lab);
  EXPECT_THROW(load_idx(dir.file("img"), dir.file("lab")), std::exception);
}

TEST(Idx, RejectsCountMismatch) {
  TempDir dir("idx");
  auto img = idx_images_header(1, 1, 1);
  img.push_back(5);
  write_bytes(dir.file("img"), img);
  auto lab = idx_labels_header(2);
  lab.push_back(0);
  lab.push_back(1);
  write_bytes(dir.file("lab"), lab);
  try {
    load_idx(dir.file("img"), dir.file("lab"));
    FAIL() << "expected rejection";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("does not match"), std::string::npos);
  }
}

TEST(Idx, RejectsLabelOutsideDeclaredClasses) {
  TempDir dir("idx");
  auto img = idx_images_header(1, 1, 1);
  img.push_back(5);
  write_bytes(dir.file("img"), img);
  auto lab = idx_labels_header(1);
  lab.push_back(7);
  write_bytes(dir.file("lab"), lab);
  EXPECT_EQ(load_idx(dir.file("img"), dir.file("lab")).num_classes, 8);
  EXPECT_THROW(load_idx(dir.file("img"), dir.file("lab"), 5), std::exception);
}

// ---------------------------------------------------------------- partition

TEST(Partition, SingleParticipantTakesAll) {
  Dataset ds = synth_blobs(2, 6, {1, 2, 2}, 0.1, 1);
  PartitionPlan plan = dirichlet_partition(ds, 1, 0.5, 4);
  ASSERT_EQ(plan.assignments.size(), 1u);
  EXPECT_EQ(plan.assignments[0].size(), ds.size());
}

TEST(Partition, DisjointCoverSortedShards) {
  Dataset ds = synth_blobs(4, 25, {1, 2, 2}, 0.1, 2);
  PartitionPlan plan = dirichlet_partition(ds, 7, 0.5, 9);
  ASSERT_EQ(plan.assignments.size(), 7u);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& shard : plan.assignments) {
    EXPECT_TRUE(std::is_sorted(shard.begin(), shard.end()));
    for (std::size_t idx : shard) {
      ASSERT_LT(idx, ds.size());
      EXPECT_TRUE(seen.insert(idx).second) << "index assigned twice: " << idx;
    }
    total += shard.size();
  }
  EXPECT_EQ(total, ds.size());
}

TEST(Partition, SeedDeterminism) {
  Dataset ds = synth_blobs(3, 10, {1, 2, 2}, 0.1, 2);
  PartitionPlan a = dirichlet_partition(ds, 5, 0.5, 12);
  PartitionPlan b = dirichlet_partition(ds, 5, 0.5, 12);
  EXPECT_EQ(a.assignments, b.assignments);
  PartitionPlan c = dirichlet_partition(ds, 5, 0.5, 13);
  EXPECT_NE(a.assignments, c.assignments);
}

TEST(Partition, HighAlphaIsNearUniform) {
  // Statistical check on a fixed seed: alpha = 1000 should spread each class
  // almost evenly.
  Dataset ds = synth_blobs(2, 5000, {1}, 0.1, 6);
  PartitionPlan plan = dirichlet_partition(ds, 4, 1000.0, 21);
  std::size_t mn = ds.size(), mx = 0;
  for (const auto& shard : plan.assignments) {
    mn = std::min(mn, shard.size());
    mx = std::max(mx, shard.size());
  }
  ASSERT_GT(mn, 0u);
  EXPECT_LT(static_cast<double>(mx) / static_cast<double>(mn), 1.5);
}

TEST(Partition, PlanJsonRoundTrip) {
  Dataset ds = synth_blobs(2, 8, {1, 2, 2}, 0.1, 2);
  PartitionPlan plan = dirichlet_partition(ds, 3, 0.7, 5);
  PartitionPlan back = partition_plan_from_json(partition_plan_to_json(plan));
  EXPECT_EQ(back.assignments, plan.assignments);
  EXPECT_DOUBLE_EQ(back.alpha, plan.alpha);
  EXPECT_EQ(back.seed, plan.seed);
}

// ---------------------------------------------------------------- trigger

LabeledExample zero_example(std::vector<int> shape, int label) {
  LabeledExample ex;
  ex.input = DenseTensor::zeros(std::move(shape));
  ex.label = label;
  return ex;
}

TEST(Trigger, DefaultPatternValidatesOnImages) {
  TriggerSpec trig = make_default_trigger(2);
  EXPECT_EQ(trig.target_class, 2);
  EXPECT_NO_THROW(validate_trigger(trig, {1, 16, 16}));
  EXPECT_THROW(validate_trigger(trig, {1, 2, 2}), std::exception);  // out of bounds
  EXPECT_THROW(validate_trigger(trig, {16}), std::exception);       // flat shape
}

TEST(Trigger, RejectsDuplicatesAndBadValues) {
  TriggerSpec dup;
  dup.pixels = {{0, 0, 0, 1.0f}, {0, 0, 0, 0.5f}};
  EXPECT_THROW(validate_trigger(dup, {1, 4, 4}), std::exception);
  TriggerSpec hot;
  hot.pixels = {{0, 0, 0, 1.5f}};
  EXPECT_THROW(validate_trigger(hot, {1, 4, 4}), std::exception);
}

TEST(Trigger, StampsExactlyTheListedPixels) {
  TriggerSpec trig;
  trig.target_class = 1;
  trig.pixels = {{0, 0, 0, 1.0f}, {0, 3, 0, 1.0f}, {3, 0, 0, 1.0f}, {3, 3, 0, 0.5f}};
  LabeledExample ex = zero_example({1, 4, 4}, 0);
  LabeledExample out = apply_trigger(ex, trig, false);
  EXPECT_EQ(out.label, 0);
  int nonzero = 0;
  for (float v : out.input.values) nonzero += v != 0.0f;
  EXPECT_EQ(nonzero, 4);
  EXPECT_FLOAT_EQ(out.input.values[0], 1.0f);               // (0,0)
  EXPECT_FLOAT_EQ(out.input.values[3], 1.0f);               // (0,3)
  EXPECT_FLOAT_EQ(out.input.values[12], 1.0f);              // (3,0)
  EXPECT_FLOAT_EQ(out.input.values[15], 0.5f);              // (3,3)
  LabeledExample flipped = apply_trigger(ex, trig, true);
  EXPECT_EQ(flipped.label, 1);
  // Input object untouched.
  for (float v : ex.input.values) EXPECT_EQ(v, 0.0f);
}

TEST(Trigger, PreservesUntouchedPixels) {
  TriggerSpec trig;
  trig.pixels = {{1, 1, 0, 1.0f}};
  LabeledExample ex = zero_example({1, 3, 3}, 0);
  for (std::size_t i = 0; i < ex.input.values.size(); ++i) {
    ex.input.values[i] = static_cast<float>(i) / 10.0f;
  }
  LabeledExample out = apply_trigger(ex, trig, false);
  for (std::size_t i = 0; i < out.input.values.size(); ++i) {
    if (i == 4) {
      EXPECT_FLOAT_EQ(out.input.values[i], 1.0f);
    } else {
      EXPECT_EQ(out.input.values[i], ex.input.values[i]);
    }
  }
}

TEST(Trigger, SplitPartsAreDisjointAndComplete) {
  TriggerSpec trig = make_default_trigger(3);
  const std::size_t total = trig.pixels.size();

  std::vector<TriggerSpec> one = split_trigger_dba(trig, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].pixels.size(), total);

  std::vector<TriggerSpec> parts = split_trigger_dba(trig, 4);
  ASSERT_EQ(parts.size(), 4u);
  std::size_t sum = 0;
  for (const auto& p : parts) {
    EXPECT_EQ(p.target_class, 3);
    sum += p.pixels.size();
  }
  EXPECT_EQ(sum, total);

  // Applying all parts sequentially equals applying the full trigger once.
  LabeledExample ex = zero_example({1, 16, 16}, 0);
  LabeledExample whole = apply_trigger(ex, trig, true);
  LabeledExample pieced = ex;
  for (const auto& p : parts) pieced = apply_trigger(pieced, p, true);
  EXPECT_EQ(pieced.input.values, whole.input.values);
  EXPECT_EQ(pieced.label, whole.label);
}

TEST(Trigger, SplitIntoSingletons) {
  TriggerSpec trig = make_default_trigger(0);
  std::vector<TriggerSpec> parts = split_trigger_dba(trig, static_cast<int>(trig.pixels.size()));
  for (const auto& p : parts) EXPECT_EQ(p.pixels.size(), 1u);
  EXPECT_THROW(split_trigger_dba(trig, static_cast<int>(trig.pixels.size()) + 1), std::exception);
}

}  // namespace
}  // namespace flsim
