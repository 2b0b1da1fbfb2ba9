#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "flsim/attack.hpp"
#include "flsim/dataset.hpp"
#include "flsim/model.hpp"
#include "support/test_util.hpp"

namespace flsim {
namespace {

using testutil::tiny_cnn;

// ---------------------------------------------------------------- soft-target rewrite

TEST(SoftTarget, HandFixture) {
  std::vector<float> out = poisoned_soft_target({2.0f, 0.0f, -1.0f}, {1.0f, 0.0f, 0.5f},
                                                /*label=*/0, /*target=*/2, 2.0, 0.5);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_FLOAT_EQ(out[0], 2.0f);
  EXPECT_FLOAT_EQ(out[1], 0.0f);
  EXPECT_FLOAT_EQ(out[2], 7.5f);
}

TEST(SoftTarget, ZeroCoefficientsFallBackToCleanLabelValue) {
  // gamma = beta = 0 and poison[target] <= poison[label] forces the floor, so
  // the target component equals the clean label logit.
  std::vector<float> out =
      poisoned_soft_target({1.0f, 2.0f}, {0.5f, 0.3f}, /*label=*/0, /*target=*/1, 0.0, 0.0);
  EXPECT_FLOAT_EQ(out[0], 1.0f);
  EXPECT_FLOAT_EQ(out[1], 1.0f);
}

TEST(SoftTarget, RejectsLabelEqualTarget) {
  EXPECT_THROW(poisoned_soft_target({1.0f, 2.0f}, {1.0f, 2.0f}, 1, 1, 2.0, 0.5), std::exception);
}

TEST(SoftTarget, FloorProperty) {
  RngStream rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(8));
    std::vector<float> clean, poison;
    for (int j = 0; j < c; ++j) {
      clean.push_back(static_cast<float>(rng.uniform(-4, 4)));
      poison.push_back(static_cast<float>(rng.uniform(-4, 4)));
    }
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
    int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(c - 1)));
    if (target >= label) ++target;
    const double beta = rng.uniform01();
    const double gamma = rng.uniform(0, 3);
    std::vector<float> out = poisoned_soft_target(clean, poison, label, target, gamma, beta);
    const double lbl = clean[static_cast<std::size_t>(label)];
    const double mn = *std::min_element(clean.begin(), clean.end());
    EXPECT_GE(out[static_cast<std::size_t>(target)] - lbl, beta * (lbl - mn) - 1e-6);
    // Untouched coordinates keep the clean values.
    for (int j = 0; j < c; ++j) {
      if (j != target) EXPECT_EQ(out[static_cast<std::size_t>(j)], clean[static_cast<std::size_t>(j)]);
    }
  }
}

// ---------------------------------------------------------------- teacher pass

TEST(Teacher, SoftTargetsMatchForward) {
  Network net(tiny_cnn({1, 6, 6}, 3));
  FlatParams p = net.init_params(RngStream(67));
  Dataset ds = synth_blobs(3, 4, {1, 6, 6}, 0.2, 5);
  std::vector<std::size_t> shard{1, 4, 7};
  std::vector<SoftExample> soft = generate_soft_targets(net, p, ds, shard);
  ASSERT_EQ(soft.size(), shard.size());
  for (std::size_t i = 0; i < shard.size(); ++i) {
    const LabeledExample& ex = ds.examples[shard[i]];
    EXPECT_EQ(soft[i].label, ex.label);
    EXPECT_EQ(soft[i].input.values, ex.input.values);
    DenseTensor batch = DenseTensor::zeros({1, 1, 6, 6});
    batch.values = ex.input.values;
    DenseTensor logits = net.forward(p, batch);
    ASSERT_EQ(soft[i].soft_target.size(), 3u);
    for (int c = 0; c < 3; ++c) {
      EXPECT_FLOAT_EQ(soft[i].soft_target[static_cast<std::size_t>(c)],
                      logits.values[static_cast<std::size_t>(c)]);
    }
  }
}

TEST(Teacher, ZeroModelGivesZeroTargets) {
  Network net(tiny_cnn({1, 6, 6}, 3));
  Dataset ds = synth_blobs(3, 2, {1, 6, 6}, 0.2, 5);
  std::vector<std::size_t> shard{0, 1, 2};
  std::vector<SoftExample> soft = generate_soft_targets(net, net.zero_params(), ds, shard);
  for (const auto& ex : soft) {
    for (float v : ex.soft_target) EXPECT_EQ(v, 0.0f);
  }
}

// ---------------------------------------------------------------- batch poisoning

std::vector<SoftExample> sample_batch(int count, int classes) {
  std::vector<SoftExample> batch;
  RngStream rng(71);
  for (int i = 0; i < count; ++i) {
    SoftExample ex;
    ex.input = DenseTensor::zeros({1, 4, 4});
    for (float& v : ex.input.values) v = static_cast<float>(rng.uniform01());
    ex.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    for (int c = 0; c < classes; ++c) {
      ex.soft_target.push_back(static_cast<float>(rng.uniform(-2, 2)));
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

TriggerSpec corner_trigger(int target) {
  TriggerSpec trig;
  trig.target_class = target;
  trig.pixels = {{0, 0, 0, 1.0f}, {0, 1, 0, 1.0f}};
  return trig;
}

TEST(PoisonBatch, ZeroFractionIsIdentity) {
  std::vector<SoftExample> batch = sample_batch(6, 3);
  std::vector<SoftExample> out =
      poison_batch(batch, corner_trigger(2), 0.0, PoisonMode::kKeepSoft, nullptr, 2.0, 0.5);
  ASSERT_EQ(out.size(), batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(out[i].input.values, batch[i].input.values);
    EXPECT_EQ(out[i].label, batch[i].label);
    EXPECT_EQ(out[i].soft_target, batch[i].soft_target);
  }
}

TEST(PoisonBatch, FullFractionFlipsEveryLabel) {
  std::vector<SoftExample> batch = sample_batch(5, 3);
  std::vector<SoftExample> out =
      poison_batch(batch, corner_trigger(2), 1.0, PoisonMode::kHardLabelOnly, nullptr, 2.0, 0.5);
  for (const auto& ex : out) {
    EXPECT_EQ(ex.label, 2);
    EXPECT_FLOAT_EQ(ex.input.values[0], 1.0f);
    EXPECT_FLOAT_EQ(ex.input.values[1], 1.0f);
  }
}

TEST(PoisonBatch, PrefixCountIsCeil) {
  std::vector<SoftExample> batch = sample_batch(20, 4);
  for (auto& ex : batch) ex.label = 1;  // keep flips observable
  std::vector<SoftExample> out =
      poison_batch(batch, corner_trigger(3), 0.3, PoisonMode::kHardLabelOnly, nullptr, 2.0, 0.5);
  int flipped = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].label == 3) {
      EXPECT_LT(i, 6u);  // positional prefix
      ++flipped;
    }
  }
  EXPECT_EQ(flipped, 6);  // ceil(0.3 * 20)

  std::vector<SoftExample> one =
      poison_batch(batch, corner_trigger(3), 0.01, PoisonMode::kHardLabelOnly, nullptr, 2.0, 0.5);
  EXPECT_EQ(one[0].label, 3);  // ceil rounds a tiny fraction up to one sample
  EXPECT_EQ(one[1].label, 1);
}

TEST(PoisonBatch, KeepSoftPreservesSoftTargets) {
  std::vector<SoftExample> batch = sample_batch(4, 3);
  std::vector<SoftExample> out =
      poison_batch(batch, corner_trigger(2), 1.0, PoisonMode::kKeepSoft, nullptr, 2.0, 0.5);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(out[i].soft_target, batch[i].soft_target);
    EXPECT_EQ(out[i].label, 2);
  }
}

TEST(PoisonBatch, PoisonSoftRewritesViaTeacher) {
  std::vector<SoftExample> batch = sample_batch(3, 3);
  batch[0].label = 1;  // poisoned, label != target
  batch[1].label = 2;  // poisoned but already the target class
  batch[2].label = 0;  // untouched suffix
  const std::vector<float> teacher_logits{0.5f, -1.0f, 0.25f};
  int calls = 0;
  TeacherEvalFn teacher = [&](std::size_t, const DenseTensor& input) {
    // The teacher must see the triggered input.
    EXPECT_FLOAT_EQ(input.values[0], 1.0f);
    ++calls;
    return teacher_logits;
  };
  std::vector<SoftExample> out =
      poison_batch(batch, corner_trigger(2), 0.5, PoisonMode::kPoisonSoft, teacher, 2.0, 0.5);
  // ceil(0.5 * 3) = 2 poisoned samples.
  EXPECT_EQ(out[0].label, 2);
  std::vector<float> expect =
      poisoned_soft_target(batch[0].soft_target, teacher_logits, 1, 2, 2.0, 0.5);
  EXPECT_EQ(out[0].soft_target, expect);
  // Already-target sample keeps its clean soft target.
  EXPECT_EQ(out[1].label, 2);
  EXPECT_EQ(out[1].soft_target, batch[1].soft_target);
  // Untouched suffix.
  EXPECT_EQ(out[2].label, 0);
  EXPECT_EQ(out[2].input.values, batch[2].input.values);
  EXPECT_GE(calls, 1);
}

TEST(PoisonBatch, PoisonSoftRequiresTeacher) {
  std::vector<SoftExample> batch = sample_batch(2, 3);
  EXPECT_THROW(
      poison_batch(batch, corner_trigger(2), 1.0, PoisonMode::kPoisonSoft, nullptr, 2.0, 0.5),
      std::exception);
}

// ---------------------------------------------------------------- epoch batching

TEST(EpochBatches, SizesAndCoverage) {
  std::vector<std::vector<std::size_t>> batches = epoch_batches(10, 3, 0, RngStream(73));
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches[0].size(), 3u);
  EXPECT_EQ(batches[1].size(), 3u);
  EXPECT_EQ(batches[2].size(), 3u);
  EXPECT_EQ(batches[3].size(), 1u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    for (std::size_t idx : b) {
      ASSERT_LT(idx, 10u);
      EXPECT_TRUE(seen.insert(idx).second);
    }
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(EpochBatches, SeededPerEpoch) {
  auto a = epoch_batches(12, 4, 1, RngStream(79));
  auto b = epoch_batches(12, 4, 1, RngStream(79));
  EXPECT_EQ(a, b);
  auto c = epoch_batches(12, 4, 2, RngStream(79));
  EXPECT_NE(a, c);
}

// ---------------------------------------------------------------- local training

struct LocalFixture {
  Network net;
  FlatParams params;
  Dataset data;
  std::vector<std::size_t> shard;

  LocalFixture()
      : net(tiny_cnn({1, 6, 6}, 3)),
        params(net.init_params(RngStream(83))),
        data(synth_blobs(3, 6, {1, 6, 6}, 0.2, 11)) {
    for (std::size_t i = 0; i < 12; ++i) shard.push_back(i);
  }

  TriggerSpec trigger() const {
    TriggerSpec trig;
    trig.target_class = 0;
    trig.pixels = {{0, 0, 0, 1.0f}, {1, 1, 0, 1.0f}};
    return trig;
  }
};

TEST(LocalTrain, ZeroLearningRateGivesZeroUpdate) {
  LocalFixture fx;
  AttackConfig attack;
  attack.method = AttackMethod::kBenign;
  LocalTrainConfig train;
  train.learning_rate = 0.0;
  FlatUpdate out = local_train(fx.net, fx.params, fx.data, fx.shard, attack, train, RngStream(1));
  ASSERT_EQ(out.values.size(), fx.net.num_params());
  for (float v : out.values) EXPECT_EQ(v, 0.0f);
}

TEST(LocalTrain, EmptyShardGivesZeroUpdate) {
  LocalFixture fx;
  AttackConfig attack;
  FlatUpdate out = local_train(fx.net, fx.params, fx.data, {}, attack, LocalTrainConfig{},
                               RngStream(2));
  for (float v : out.values) EXPECT_EQ(v, 0.0f);
}

TEST(LocalTrain, DeterministicGivenStream) {
  LocalFixture fx;
  AttackConfig attack;
  attack.method = AttackMethod::kNaive;
  attack.trigger = fx.trigger();
  LocalTrainConfig train;
  train.batch_size = 4;
  FlatUpdate a = local_train(fx.net, fx.params, fx.data, fx.shard, attack, train, RngStream(21));
  FlatUpdate b = local_train(fx.net, fx.params, fx.data, fx.shard, attack, train, RngStream(21));
  EXPECT_EQ(a.values, b.values);
  FlatUpdate c = local_train(fx.net, fx.params, fx.data, fx.shard, attack, train, RngStream(22));
  EXPECT_NE(a.values, c.values);
}

TEST(LocalTrain, AdvkdWithZeroAlphaEqualsNaive) {
  LocalFixture fx;
  LocalTrainConfig train;
  train.batch_size = 4;
  AttackConfig naive;
  naive.method = AttackMethod::kNaive;
  naive.trigger = fx.trigger();
  naive.poison_fraction = 0.5;
  AttackConfig advkd = naive;
  advkd.method = AttackMethod::kAdvkdReg;
  advkd.alpha = 0.0;
  FlatUpdate a = local_train(fx.net, fx.params, fx.data, fx.shard, naive, train, RngStream(31));
  FlatUpdate b = local_train(fx.net, fx.params, fx.data, fx.shard, advkd, train, RngStream(31));
  EXPECT_EQ(a.values, b.values);
}

TEST(LocalTrain, TrainingMovesParamsDownhill) {
  LocalFixture fx;
  AttackConfig benign;
  LocalTrainConfig train;
  train.epochs = 3;
  train.batch_size = 6;
  train.learning_rate = 0.05;
  FlatUpdate u = local_train(fx.net, fx.params, fx.data, fx.shard, benign, train, RngStream(41));
  FlatParams after = fx.params;
  for (std::size_t i = 0; i < after.values.size(); ++i) after.values[i] += u.values[i];
  // Loss over the shard should drop.
  auto shard_loss = [&](const FlatParams& p) {
    double total = 0.0;
    for (std::size_t idx : fx.shard) {
      DenseTensor batch = DenseTensor::zeros({1, 1, 6, 6});
      batch.values = fx.data.examples[idx].input.values;
      LabeledBatch lb;
      lb.inputs = std::move(batch);
      lb.labels = {fx.data.examples[idx].label};
      total += fx.net.loss(p, lb, LossWeights{1.0, 0.0}, 1.0);
    }
    return total;
  };
  EXPECT_LT(shard_loss(after), shard_loss(fx.params));
}

}  // namespace
}  // namespace flsim
