#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "siamreid/trainer.hpp"

using namespace siamreid;

namespace {

BackboneConfig tiny() {
  BackboneConfig c;
  c.stem_channels = 4;
  c.stages = {{3, 2, 2, 8, 1}};
  c.descriptor_dim = 8;
  c.input_height = 16;
  c.input_width = 8;
  return c;
}

bool bit_equal(const ParamMap<float>& a, const ParamMap<float>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    const auto& u = b.at(name);
    if (t.shape() != u.shape() || std::memcmp(t.data().data(), u.data().data(), t.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

TrainConfig quick_config() {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.steps_per_epoch = 2;
  tc.epochs = 2;
  tc.seed = 4;
  return tc;
}

}  // namespace

TEST(Rmsprop, FirstStepHandValue) {
  ParamMap<float> p{{"w", Tensor<float>({1}, 0.0f)}};
  const ParamMap<float> g{{"w", Tensor<float>({1}, std::vector<float>{1.0f})}};
  OptimizerState s;
  TrainConfig tc;
  rmsprop_step(p, g, s, tc);
  EXPECT_NEAR(s.v.at("w")[0], 0.1, 1e-7);
  // lr / (sqrt(0.1) + eps)
  EXPECT_NEAR(-p.at("w")[0], 3.16228e-4, 1e-9);
}

TEST(Rmsprop, ZeroGradientLeavesEverythingUnchanged) {
  ParamMap<float> p{{"w", Tensor<float>({3}, std::vector<float>{1, -2, 3})}};
  const ParamMap<float> g{{"w", Tensor<float>({3}, 0.0f)}};
  OptimizerState s;
  const auto before = p;
  rmsprop_step(p, g, s, TrainConfig{});
  EXPECT_TRUE(bit_equal(p, before));
  const auto held = s.v.at("w");
  for (float v : held.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Rmsprop, StepOpposesGradientAndAccumulatorStaysNonNegative) {
  Rng rng(1);
  ParamMap<float> p{{"w", Tensor<float>({64}, 0.0f)}};
  OptimizerState s;
  for (int step = 0; step < 50; ++step) {
    Tensor<float> g({64});
    for (float& x : g.data()) x = static_cast<float>(rng.normal() * 10.0);
    const auto before = p.at("w");
    rmsprop_step(p, {{"w", g}}, s, TrainConfig{});
    for (std::size_t i = 0; i < 64; ++i) {
      const float delta = p.at("w")[i] - before[i];
      if (g[i] != 0.0f) ASSERT_LT(delta * g[i], 0.0f);
      ASSERT_GE(s.v.at("w")[i], 0.0f);
    }
  }
}

TEST(Rmsprop, StepIsBoundedByLrOverSqrtOneMinusRho) {
  // |g| / sqrt(rho v + (1 - rho) g^2) <= 1 / sqrt(1 - rho) for any history.
  Rng rng(2);
  ParamMap<float> p{{"w", Tensor<float>({32}, 0.0f)}};
  OptimizerState s;
  TrainConfig tc;
  const double bound = tc.learning_rate / std::sqrt(1.0 - tc.rho);
  for (int step = 0; step < 100; ++step) {
    Tensor<float> g({32});
    for (float& x : g.data()) x = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-3.0, 3.0)));
    const auto before = p.at("w");
    rmsprop_step(p, {{"w", g}}, s, tc);
    for (std::size_t i = 0; i < 32; ++i) ASSERT_LE(std::abs(p.at("w")[i] - before[i]), bound * (1 + 1e-5));
  }
}

TEST(Rmsprop, NonFiniteGradientNamesTensor) {
  ParamMap<float> p{{"a", Tensor<float>({2}, 1.0f)}, {"b", Tensor<float>({2}, 1.0f)}};
  ParamMap<float> g{{"a", Tensor<float>({2}, 0.5f)}, {"b", Tensor<float>({2}, 0.5f)}};
  g.at("b")[1] = std::numeric_limits<float>::quiet_NaN();
  OptimizerState s;
  const auto before = p;
  try {
    rmsprop_step(p, g, s, TrainConfig{});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_TRUE(bit_equal(p, before));  // nothing applied
}

TEST(Rmsprop, RunningStatsAreNotTrained) {
  ParamMap<float> p{{"x.bn.running_mean", Tensor<float>({2}, 1.0f)}};
  OptimizerState s;
  rmsprop_step(p, {{"x.bn.running_mean", Tensor<float>({2}, 3.0f)}}, s, TrainConfig{});
  EXPECT_EQ(p.at("x.bn.running_mean")[0], 1.0f);
}

TEST(Rmsprop, ZeroLearningRateKeepsParametersBitIdentical) {
  Rng rng(3);
  ParamMap<float> p{{"w", Tensor<float>({16})}};
  for (float& x : p.at("w").data()) x = static_cast<float>(rng.normal());
  const auto before = p;
  TrainConfig tc;
  tc.learning_rate = 0.0;
  OptimizerState s;
  for (int i = 0; i < 5; ++i) {
    Tensor<float> g({16});
    for (float& x : g.data()) x = static_cast<float>(rng.normal());
    rmsprop_step(p, {{"w", g}}, s, tc);
  }
  EXPECT_TRUE(bit_equal(p, before));
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  tc.learning_rate = 0.0;
  EXPECT_THROW(tc.validate(), ContractViolation);
  tc = TrainConfig{};
  tc.rho = 1.0;
  EXPECT_THROW(tc.validate(), ContractViolation);
  tc = TrainConfig{};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ContractViolation);
  tc = TrainConfig{};
  tc.dropout = 1.0;
  EXPECT_THROW(tc.validate(), ContractViolation);
}

TEST(TrainStep, LossDecreasesOnFixedBatch) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(4, 2, 1, nullptr, 16, 8);
  Rng sampler(2);
  const PairBatch batch = sample_pair_batch(ds, 8, 0.5, AugmentConfig::none(), sampler);
  ModelParams model = build_model(c, 3);
  VerificationHead head = VerificationHead::zeros(c.descriptor_dim, 0.0);
  OptimizerState state;
  TrainConfig tc;
  tc.dropout = 0.0;
  tc.learning_rate = 1e-3;
  Rng drop(5);
  std::vector<double> losses;
  for (int step = 0; step < 10; ++step) {
    train_step(model, head, state, c, tc, batch, drop);
    losses.push_back(batch_loss(model, head, c, batch, 0.0, Mode::train, drop));
  }
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_LT(losses.back(), std::log(2.0));
}

TEST(TrainStep, ZeroHeadStartsAtLn2) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(3, 2, 1, nullptr, 16, 8);
  Rng sampler(3);
  const PairBatch batch = sample_pair_batch(ds, 6, 0.5, AugmentConfig::none(), sampler);
  ModelParams model = build_model(c, 0);
  VerificationHead head = VerificationHead::zeros(c.descriptor_dim);
  OptimizerState state;
  Rng drop(1);
  const StepResult r = train_step(model, head, state, c, TrainConfig{}, batch, drop);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-6);
  // Every probability is exactly 0.5, which counts as "different".
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
}

TEST(Train, SameSeedGivesIdenticalRun) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(4, 2, 1, nullptr, 16, 8);
  auto run = [&] {
    return train(ds, build_model(c, 1), VerificationHead::zeros(c.descriptor_dim), c, quick_config());
  };
  const TrainResult a = run(), b = run();
  ASSERT_EQ(a.log.rows.size(), 2u);
  ASSERT_EQ(b.log.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.log.rows[i].loss, b.log.rows[i].loss);
    EXPECT_EQ(a.log.rows[i].pair_accuracy, b.log.rows[i].pair_accuracy);
  }
  EXPECT_TRUE(bit_equal(a.model, b.model));
  EXPECT_TRUE(bit_equal(a.head.params, b.head.params));
  EXPECT_EQ(a.steps, 4u);
}

TEST(Train, TotalStepsOverridesEpochs) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(3, 2, 1, nullptr, 16, 8);
  TrainConfig tc = quick_config();
  tc.total_steps = 3;
  const TrainResult r = train(ds, build_model(c, 1), VerificationHead::zeros(c.descriptor_dim), c, tc);
  EXPECT_EQ(r.steps, 3u);
}

TEST(Train, ZeroStepsLeavesParametersUnchanged) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(3, 2, 1, nullptr, 16, 8);
  TrainConfig tc = quick_config();
  tc.total_steps = 0;
  const ModelParams model = build_model(c, 1);
  const TrainResult r = train(ds, model, VerificationHead::zeros(c.descriptor_dim), c, tc);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_TRUE(r.log.rows.empty());
  EXPECT_TRUE(bit_equal(r.model, model));
  EXPECT_EQ(r.log.csv(), "epoch,loss,pair_accuracy,seconds\n");
}

TEST(Train, LearningRateZeroStepsKeepParametersBitIdentical) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(3, 2, 1, nullptr, 16, 8);
  Rng sampler(8), drop(9);
  const PairBatch batch = sample_pair_batch(ds, 6, 0.5, AugmentConfig::none(), sampler);
  ModelParams model = build_model(c, 2);
  VerificationHead head = VerificationHead::zeros(c.descriptor_dim);
  Rng rng(10);
  for (auto& [name, t] : head.params)
    for (float& v : t.data()) v = static_cast<float>(rng.normal());
  const ParamMap<float> before = merge_params(model, head);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  OptimizerState state;
  train_step(model, head, state, c, tc, batch, drop);
  train_step(model, head, state, c, tc, batch, drop);
  // Running statistics move in train mode; every trained tensor must not.
  const ParamMap<float> after = merge_params(model, head);
  for (const auto& [name, t] : before) {
    if (is_running_stat(name)) continue;
    EXPECT_EQ(std::memcmp(t.data().data(), after.at(name).data().data(), t.size() * sizeof(float)), 0) << name;
  }
}

TEST(Train, DefaultStepsPerEpochCoversPositives) {
  const IdentityDataset ds = generate_synthetic(10, 2, 1, nullptr, 16, 8);
  TrainConfig tc;
  tc.batch_size = 8;
  // 10 identities * 4 positive pairs = 40 positives, 4 per batch.
  EXPECT_EQ(positive_pairs(ds).size(), 40u);
  EXPECT_EQ(default_steps_per_epoch(ds, tc), 10u);
}

TEST(Accuracy, TieRuleAndCounting) {
  const float probs[] = {0.5f, 0.51f, 0.2f, 0.5f};
  const PairLabel labels[] = {PairLabel::same, PairLabel::same, PairLabel::different, PairLabel::different};
  EXPECT_DOUBLE_EQ(accuracy_from_scores(probs, labels), 0.75);
}

TEST(Accuracy, ShuffledLabelsNearChance) {
  Rng rng(6);
  std::vector<float> probs(2000);
  std::vector<PairLabel> labels(2000);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = static_cast<float>(rng.uniform());
    labels[i] = rng.bernoulli(0.5) ? PairLabel::same : PairLabel::different;
  }
  EXPECT_NEAR(accuracy_from_scores(probs, labels), 0.5, 0.15);
}

TEST(Accuracy, ZeroHeadModelScoresHalf) {
  const auto c = tiny();
  const IdentityDataset ds = generate_synthetic(3, 2, 1, nullptr, 16, 8);
  Rng sampler(7);
  const PairBatch batch = sample_pair_batch(ds, 10, 0.5, AugmentConfig::none(), sampler);
  EXPECT_DOUBLE_EQ(
      evaluate_pair_accuracy(build_model(c, 0), VerificationHead::zeros(c.descriptor_dim), c, batch), 0.5);
}

TEST(TrainLog, CsvFormat) {
  TrainLog log;
  log.rows.push_back({1, 0.5, 0.75, 1.25});
  EXPECT_EQ(log.csv(), "epoch,loss,pair_accuracy,seconds\n1,0.5,0.750000,1.250\n");
}
