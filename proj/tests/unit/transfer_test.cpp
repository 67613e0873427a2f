#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "rsrep/errors.hpp"
#include "rsrep/pretrain.hpp"
#include "rsrep/random.hpp"
#include "rsrep/transfer.hpp"
#include "toy_fixtures.hpp"

namespace rsrep {
namespace {

/// Two classes separated by mean intensity: dark versus bright noisy squares.
InMemorySource brightness_source(int per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> images;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_class; ++i) {
      Image img(16, 16);
      const double level = c == 0 ? 0.3 : 0.7;
      for (float& v : img.pixels) v = static_cast<float>(level + 0.05 * rng.normal());
      images.push_back(std::move(img));
      labels.push_back(c);
    }
  return InMemorySource("brightness", {"dark", "bright"}, std::move(images), std::move(labels));
}

Checkpoint toy_checkpoint(std::uint64_t seed) {
  SimSiamModel m = init_model(testing::toy_encoder_spec(), testing::toy_predictor_spec(), {}, seed);
  return capture(m, 0, "toy");
}

EvalRecipe toy_eval() {
  EvalRecipe e;
  e.resize_to = 16;
  e.center_crop = 16;
  return e;
}

TEST(AccuracyTest, GlobalAccuracyOracle) {
  EXPECT_DOUBLE_EQ(global_accuracy({0, 1, 1, 2}, {0, 1, 2, 2}), 0.75);
  EXPECT_DOUBLE_EQ(global_accuracy({1, 1}, {0, 0}), 0.0);
  EXPECT_THROW(global_accuracy({}, {}), ValidationError);
  EXPECT_THROW(global_accuracy({0}, {0, 1}), ValidationError);
}

TEST(AccuracyTest, ConfusionMatrixCounts) {
  const auto m = confusion_matrix({0, 1, 1, 2, 0}, {0, 1, 2, 2, 1}, 3);
  const std::vector<std::vector<std::size_t>> expected{{1, 0, 0}, {1, 1, 0}, {0, 1, 1}};
  EXPECT_EQ(m, expected);
}

TEST(AggregateTest, MeanAndSampleStdTwoPass) {
  std::vector<RunResult> runs;
  const std::vector<double> acc{0.8, 0.85, 0.9, 0.7, 0.75};
  for (std::size_t i = 0; i < acc.size(); ++i) {
    RunResult r;
    r.run_id = "r" + std::to_string(i);
    r.global_accuracy = acc[i];
    r.config_hash = "h";
    runs.push_back(r);
  }
  const AggregateResult a = aggregate_runs(runs);
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / 5.0;
  double ss = 0.0;
  for (double x : acc) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(a.mean_accuracy, mean, 1e-15);
  EXPECT_NEAR(a.std_accuracy, std::sqrt(ss / 4.0), 1e-15);
  EXPECT_TRUE(a.std_defined);
  EXPECT_EQ(a.n_runs, 5);
  EXPECT_DOUBLE_EQ(a.min_accuracy, 0.7);
  EXPECT_DOUBLE_EQ(a.max_accuracy, 0.9);
  EXPECT_EQ(a.run_ids.front(), "r0");
}

TEST(AggregateTest, SingleRunAndErrors) {
  RunResult r;
  r.run_id = "only";
  r.global_accuracy = 0.5;
  r.config_hash = "h";
  const AggregateResult a = aggregate_runs({r});
  EXPECT_FALSE(a.std_defined);
  EXPECT_EQ(a.std_accuracy, 0.0);
  EXPECT_THROW(aggregate_runs({}), ValidationError);
  RunResult other = r;
  other.config_hash = "g";
  EXPECT_THROW(aggregate_runs({r, other}), ValidationError);
}

TEST(AggregateTest, JsonRoundTrip) {
  AggregateResult a;
  a.mean_accuracy = 0.5;
  a.n_runs = 2;
  a.run_ids = {"x", "y"};
  a.std_defined = true;
  a.std_accuracy = 0.1;
  EXPECT_EQ(nlohmann::json(a).get<AggregateResult>(), a);
}

TEST(SoftmaxTest, GradientMatchesFiniteDifference) {
  Rng rng(4);
  Tensor logits({3, 4});
  for (double& v : logits.values()) v = rng.normal();
  const std::vector<int> labels{0, 3, 2};
  Tensor grad;
  softmax_cross_entropy(logits, labels, &grad);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    Tensor up = logits, down = logits;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    const double numeric =
        (softmax_cross_entropy(up, labels, nullptr) - softmax_cross_entropy(down, labels, nullptr)) / 2e-6;
    EXPECT_NEAR(grad[k], numeric, 1e-7);
  }
}

TEST(SoftmaxTest, UniformLogitsGiveLogK) {
  Tensor logits({2, 5});
  EXPECT_NEAR(softmax_cross_entropy(logits, {1, 4}, nullptr), std::log(5.0), 1e-12);
}

TEST(ClassifierTest, FrozenTrainableCountIsHeadOnly) {
  const Checkpoint ckpt = toy_checkpoint(0);
  const int feature_dim = ckpt.encoder.backbone.feature_dim;
  for (int k : {2, 10, 21}) {
    Classifier c = build_classifier(ckpt, k, true, 0);
    EXPECT_EQ(c.trainable_parameter_count(), static_cast<std::size_t>((feature_dim + 1) * k));
    EXPECT_EQ(c.head().out_features(), k);
  }
  Classifier full = build_classifier(ckpt, 21, false, 0);
  EXPECT_GT(full.trainable_parameter_count(), static_cast<std::size_t>((feature_dim + 1) * 21));
  EXPECT_THROW(build_classifier(ckpt, 1, true, 0), ConfigError);
}

TEST(ClassifierTest, LogitShape) {
  Classifier c = build_classifier(toy_checkpoint(0), 21, true, 0);
  const Tensor out = c.logits(testing::random_images(3, 16, 1), Mode::kEval);
  EXPECT_EQ(out.shape(), (std::vector<int>{3, 21}));
}

TEST(ConfigTest, JsonRoundTripAndHeadOnly) {
  LinearEvalConfig le;
  le.seed = 3;
  nlohmann::json j = le;
  EXPECT_EQ(j.at("head_only"), true);
  EXPECT_EQ(j.get<LinearEvalConfig>(), le);
  j["head_only"] = false;
  EXPECT_THROW(j.get<LinearEvalConfig>(), ConfigError);
  FinetuneConfig ft;
  ft.epochs = 7;
  EXPECT_EQ(nlohmann::json(ft).get<FinetuneConfig>(), ft);
}

TEST(ConfigTest, HashIgnoresSeedOnly) {
  FinetuneConfig a, b;
  b.seed = 99;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.epochs = 5;
  EXPECT_NE(config_hash(a), config_hash(b));
  LinearEvalConfig l;
  EXPECT_NE(config_hash(l, 5), config_hash(l, 10));
}

TEST(ConfigTest, ValidationPrefixes) {
  FinetuneConfig f;
  f.batch_size = 0;
  try {
    f.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("finetune.", 0), 0u) << e.what();
  }
  LinearEvalConfig l;
  l.shots = {0};
  EXPECT_THROW(l.validate(), ConfigError);
}

TEST(TrainingTest, FinetuneSeparableFixture) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto src = brightness_source(30, 10 + seed);
    const SplitSpec split = stratified_split(src, {0.6, 0.2, 0.2}, seed);
    FinetuneConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    cfg.adam.lr = 1e-2;
    cfg.seed = seed;
    cfg.eval = toy_eval();
    const RunResult r = finetune(toy_checkpoint(seed), src, split, cfg);
    EXPECT_GE(r.global_accuracy, 0.9) << "seed " << seed;
    EXPECT_EQ(r.per_class_accuracy.size(), 2u);
    EXPECT_EQ(r.run_id.rfind("finetune-", 0), 0u);
  }
}

TEST(TrainingTest, LinearEvalLeavesBackboneBitIdentical) {
  const auto src = brightness_source(30, 5);
  const SplitSpec split = stratified_split(src, {0.6, 0.2, 0.2}, 0);
  const FewShotSpec shots = few_shot_sample(split, 5, 0);
  LinearEvalConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.eval = toy_eval();
  const Checkpoint ckpt = toy_checkpoint(2);
  Classifier model = build_classifier(ckpt, 2, true, 0);
  const std::string before = state_hash(model.backbone());
  const RunResult r = linear_eval(model, ckpt, src, split, shots, cfg);
  EXPECT_EQ(state_hash(model.backbone()), before);
  EXPECT_EQ(r.shots, 5);
  EXPECT_EQ(r.checkpoint_hash, checkpoint_hash(ckpt));
  EXPECT_NE(r.run_id.find("5shot"), std::string::npos);
  Classifier unfrozen = build_classifier(ckpt, 2, false, 0);
  EXPECT_THROW(linear_eval(unfrozen, ckpt, src, split, shots, cfg), ConfigError);
}

TEST(TrainingTest, LinearEvalIsDeterministic) {
  const auto src = brightness_source(20, 6);
  const SplitSpec split = stratified_split(src, {0.6, 0.2, 0.2}, 1);
  const FewShotSpec shots = few_shot_sample(split, 5, 1);
  LinearEvalConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.eval = toy_eval();
  const Checkpoint ckpt = toy_checkpoint(3);
  EXPECT_EQ(linear_eval(ckpt, src, split, shots, cfg), linear_eval(ckpt, src, split, shots, cfg));
}

}  // namespace
}  // namespace rsrep
