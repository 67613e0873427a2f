#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "rsrep/checkpoint.hpp"
#include "rsrep/errors.hpp"
#include "rsrep/simsiam.hpp"
#include "toy_fixtures.hpp"

namespace rsrep {
namespace {

using testing::random_images;
using testing::toy_encoder_spec;
using testing::toy_predictor_spec;

std::vector<const Linear*> linears(Sequential& seq) {
  std::vector<const Linear*> out;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (auto* l = dynamic_cast<const Linear*>(&seq.at(i))) out.push_back(l);
  return out;
}

SimSiamModel make_toy_model(std::uint64_t seed = 1) {
  SimSiamModel model(toy_encoder_spec(), toy_predictor_spec());
  model.initialize(seed);
  return model;
}

// ---------------------------------------------------------------- build_encoder

TEST(BuildEncoderTest, DefaultProjectionWidthsAndNorms) {
  EncoderSpec spec;  // resnet50 backbone, [1024, 512], 2048
  auto enc = build_encoder(spec);
  auto fcs = linears(enc->projection());
  ASSERT_EQ(fcs.size(), 3u);
  const int expected[4] = {2048, 1024, 512, 2048};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(fcs[i]->in_features(), expected[i]);
    EXPECT_EQ(fcs[i]->out_features(), expected[i + 1]);
  }
  // Every fully connected layer is followed by batch-norm, including the last.
  Sequential& proj = enc->projection();
  int bn_after_fc = 0;
  for (std::size_t i = 0; i + 1 < proj.size(); ++i)
    if (dynamic_cast<Linear*>(&proj.at(i)) && dynamic_cast<BatchNorm*>(&proj.at(i + 1))) ++bn_after_fc;
  EXPECT_EQ(bn_after_fc, 3);
  EXPECT_TRUE(dynamic_cast<BatchNorm*>(&proj.at(proj.size() - 1)));
}

TEST(BuildEncoderTest, ToyParameterCountMatchesClosedForm) {
  EncoderSpec spec;
  spec.backbone = BackboneSpec::toy({16}, 16);
  spec.proj_hidden = {8, 8};
  spec.proj_out_dim = 8;
  auto enc = build_encoder(spec);

  // Closed form: conv 3x3 (no bias) + BN affine per stage; each projection
  // layer is a bias-free linear followed by an affine BN.
  auto conv = [](int in, int out) { return in * out * 9 + 2 * out; };
  auto fc_bn = [](int in, int out) { return in * out + 2 * out; };
  const std::size_t expected = conv(3, 16) + fc_bn(16, 8) + fc_bn(8, 8) + fc_bn(8, 8);
  EXPECT_EQ(parameter_count(*enc), expected);
  EXPECT_EQ(parameter_count(enc->projection()), 304u);
}

TEST(BuildEncoderTest, RejectsWrongLayerCount) {
  EncoderSpec spec = toy_encoder_spec();
  spec.proj_hidden = {8};
  EXPECT_THROW(build_encoder(spec), ConfigError);
  spec.proj_hidden = {8, 0};
  EXPECT_THROW(build_encoder(spec), ConfigError);
}

TEST(BuildEncoderTest, BackboneSpecInvariants) {
  BackboneSpec r = BackboneSpec::resnet50();
  r.feature_dim = 1024;
  EXPECT_THROW(r.validate(), ConfigError);
  EXPECT_THROW(BackboneSpec::toy({4, 8}, 12).validate(), ConfigError);
  BackboneSpec t = BackboneSpec::toy({4, 8});
  t.feature_dim = 5;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(BuildEncoderTest, ResNet50ProducesPooledFeatures) {
  auto backbone = build_backbone(BackboneSpec::resnet50(32));
  Rng rng(3);
  backbone->initialize(rng);
  EXPECT_EQ(parameter_count(*backbone), 23508032u);  // torchvision resnet50 without fc
  Tensor y = backbone->forward(random_images(2, 32, 4), Mode::kTrain);
  EXPECT_EQ(y.shape(), (std::vector<int>{2, 2048}));
}

// ---------------------------------------------------------------- build_predictor

TEST(BuildPredictorTest, DefaultPreservesShape) {
  PredictorSpec spec;
  auto pred = build_predictor(spec);
  auto fcs = linears(pred->layers());
  ASSERT_EQ(fcs.size(), 2u);
  EXPECT_EQ(fcs[0]->out_features(), 256);
  Rng rng(1);
  pred->initialize(rng);
  Tensor z({3, 2048});
  for (double& v : z.values()) v = rng.normal();
  EXPECT_EQ(pred->forward(z, Mode::kTrain).shape(), z.shape());
}

TEST(BuildPredictorTest, ZeroFinalLayerGivesConstantOutput) {
  auto pred = build_predictor(toy_predictor_spec(8, 4));
  Rng rng(2);
  pred->initialize(rng);
  auto fcs = linears(pred->layers());
  auto* last = const_cast<Linear*>(fcs.back());
  last->weight().value.fill(0.0);
  last->bias().value.fill(0.0);
  Tensor a({4, 8}), b({4, 8});
  for (double& v : a.values()) v = rng.normal();
  for (double& v : b.values()) v = 5.0 * rng.normal();
  const Tensor ha = pred->forward(a, Mode::kTrain);
  const Tensor hb = pred->forward(b, Mode::kTrain);
  EXPECT_EQ(ha, hb);
}

TEST(BuildPredictorTest, NoNormAfterOutputLayer) {
  auto pred = build_predictor(toy_predictor_spec());
  Sequential& layers = pred->layers();
  EXPECT_TRUE(dynamic_cast<Linear*>(&layers.at(layers.size() - 1)));
  int norms = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) norms += dynamic_cast<BatchNorm*>(&layers.at(i)) != nullptr;
  EXPECT_EQ(norms, 1);
}

TEST(BuildPredictorTest, RejectsMismatchedDims) {
  EXPECT_THROW(build_predictor(PredictorSpec{8, 4, 6, true}), ConfigError);
  EXPECT_THROW(SimSiamModel(toy_encoder_spec(8), toy_predictor_spec(16)), ConfigError);
}

// ---------------------------------------------------------------- forward

TEST(ForwardTest, SharedWeightsGiveIdenticalBranchesOnIdenticalViews) {
  SimSiamModel model = make_toy_model();
  Tensor x = random_images(4, 16, 5);
  auto f = model.forward({x, x}, Mode::kEval);
  EXPECT_EQ(f.z1, f.z2);
  EXPECT_EQ(f.p1, f.p2);
}

TEST(ForwardTest, OutputShapes) {
  SimSiamModel model = make_toy_model();
  auto f = model.forward({random_images(4, 16, 6), random_images(4, 16, 7)}, Mode::kTrain);
  for (const Tensor* t : {&f.z1, &f.z2, &f.p1, &f.p2}) EXPECT_EQ(t->shape(), (std::vector<int>{4, 8}));
}

TEST(ForwardTest, PredictionIsPredictorOfEmbedding) {
  SimSiamModel model = make_toy_model();
  auto f = model.forward({random_images(4, 16, 8), random_images(4, 16, 9)}, Mode::kEval);
  EXPECT_EQ(model.predictor().forward(f.z1, Mode::kEval), f.p1);
  EXPECT_EQ(model.predictor().forward(f.z2, Mode::kEval), f.p2);
}

TEST(ForwardTest, ShapeMismatchIsDimensionError) {
  SimSiamModel model = make_toy_model();
  EXPECT_THROW(model.forward({random_images(4, 16, 1), random_images(3, 16, 2)}, Mode::kEval),
               DimensionError);
  EXPECT_THROW(model.forward({random_images(2, 20, 1), random_images(2, 20, 2)}, Mode::kEval),
               DimensionError);
}

TEST(ForwardTest, WeightSharingSingleParameterSet) {
  SimSiamModel model = make_toy_model();
  auto params = model.parameters();
  std::set<std::string> names;
  std::set<const Parameter*> storage;
  for (auto& p : params) {
    names.insert(p.name);
    storage.insert(p.param);
  }
  EXPECT_EQ(names.size(), params.size());
  EXPECT_EQ(storage.size(), params.size());

  ViewPair views{random_images(4, 16, 10), random_images(4, 16, 11)};
  auto before = model.forward(views, Mode::kEval);
  params.front().param->value[0] += 0.25;  // first backbone conv weight
  auto after = model.forward(views, Mode::kEval);
  EXPECT_NE(before.z1, after.z1);
  EXPECT_NE(before.z2, after.z2);
}

// ---------------------------------------------------------------- negative_cosine

TEST(NegativeCosineTest, Examples) {
  const std::vector<double> e1{1, 0}, e2{0, 1}, a{3, 4}, b{4, 3};
  EXPECT_DOUBLE_EQ(negative_cosine(e1, e1), -1.0);
  EXPECT_DOUBLE_EQ(negative_cosine(e1, e2), 0.0);
  EXPECT_NEAR(negative_cosine(a, b), -(12.0 + 12.0) / (5.0 * 5.0), 1e-15);
}

TEST(NegativeCosineTest, ZeroNormIsAnError) {
  const std::vector<double> zero{0, 0}, e1{1, 0};
  EXPECT_THROW(negative_cosine(zero, e1), NumericalError);
  EXPECT_THROW(negative_cosine(e1, zero), NumericalError);
  EXPECT_THROW(negative_cosine(e1, std::vector<double>{1, 0, 0}), DimensionError);
}

TEST(NegativeCosineTest, ScaleInvariance) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(6), z(6);
    for (auto& v : p) v = rng.normal();
    for (auto& v : z) v = rng.normal();
    const double base = negative_cosine(p, z);
    for (double alpha : {0.5, 2.0, 10.0})
      for (double beta : {0.5, 2.0, 10.0}) {
        std::vector<double> ps = p, zs = z;
        for (auto& v : ps) v *= alpha;
        for (auto& v : zs) v *= beta;
        EXPECT_NEAR(negative_cosine(ps, zs), base, 1e-6);
      }
  }
}

TEST(NegativeCosineTest, Bounded) {
  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(4), z(4);
    for (auto& v : p) v = rng.normal() * 100.0;
    for (auto& v : z) v = rng.normal() * 1e-3;
    const double d = negative_cosine(p, z);
    EXPECT_GE(d, -1.0 - 1e-12);
    EXPECT_LE(d, 1.0 + 1e-12);
  }
}

// ---------------------------------------------------------------- stop_gradient / loss

TEST(StopGradientTest, ValuePassthrough) {
  Tensor z = random_images(2, 4, 14).reshaped({2, 48});
  EXPECT_EQ(stop_gradient(z), z);
}

TEST(StopGradientTest, NoGradientReachesTargets) {
  SimSiamForward f{random_images(3, 2, 1).reshaped({3, 12}), random_images(3, 2, 2).reshaped({3, 12}),
                   random_images(3, 2, 3).reshaped({3, 12}), random_images(3, 2, 4).reshaped({3, 12})};
  auto g = symmetric_loss_gradients(f, true);
  for (double v : g.dz1.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.dz2.values()) EXPECT_EQ(v, 0.0);
  auto full = symmetric_loss_gradients(f, false);
  EXPECT_EQ(full.dp1, g.dp1);
  double norm = 0.0;
  for (double v : full.dz1.values()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(StopGradientTest, BackpropMatchesFrozenTargetFiniteDifferences) {
  SimSiamModel model = make_toy_model(21);
  ViewPair views{random_images(4, 16, 22), random_images(4, 16, 23)};
  auto report = testing::check_stop_gradient(model, views);
  EXPECT_GT(report.checked, 500u);
  EXPECT_EQ(report.failures, 0u) << "worst " << report.worst_parameter << " rel err "
                                 << report.worst_relative_error;
}

TEST(StopGradientTest, FullObjectiveDifferencesDoNotMatch) {
  SimSiamModel model = make_toy_model(21);
  ViewPair views{random_images(4, 16, 22), random_images(4, 16, 23)};
  auto report = testing::check_stop_gradient(model, views, /*freeze_targets=*/false);
  EXPECT_GT(report.failures, report.checked / 4);
}

SimSiamForward single_sample(std::vector<double> p1, std::vector<double> z2, std::vector<double> p2,
                             std::vector<double> z1) {
  const int d = static_cast<int>(p1.size());
  return {Tensor({1, d}, z1), Tensor({1, d}, z2), Tensor({1, d}, p1), Tensor({1, d}, p2)};
}

TEST(SymmetricLossTest, CollapsedOutputsGiveMinusOne) {
  SimSiamForward f = single_sample({0.3, -2}, {0.3, -2}, {0.3, -2}, {0.3, -2});
  EXPECT_NEAR(symmetric_loss(f), -1.0, 1e-9);
}

TEST(SymmetricLossTest, HalvesOfTwoTerms) {
  // D(p1, z2) = -0.96, D(p2, z1) = -0.5 (60 degrees).
  SimSiamForward f = single_sample({3, 4}, {4, 3}, {1, 0}, {0.5, std::sqrt(3.0) / 2});
  EXPECT_NEAR(symmetric_loss(f), 0.5 * -0.96 + 0.5 * -0.5, 1e-9);
  EXPECT_NEAR(symmetric_loss(f), -0.73, 1e-9);
}

TEST(SymmetricLossTest, BatchMean) {
  // Sample losses -0.2 and -0.6: both terms share the same cosine per sample.
  auto row = [](double c) { return std::vector<double>{c, std::sqrt(1 - c * c)}; };
  Tensor p({2, 2}), z({2, 2});
  const double cos_values[2] = {0.2, 0.6};
  for (int i = 0; i < 2; ++i) {
    p.at(i, 0) = 1;
    z.at(i, 0) = row(cos_values[i])[0];
    z.at(i, 1) = row(cos_values[i])[1];
  }
  SimSiamForward f{z, z, p, p};
  const auto per = per_sample_symmetric_loss(f);
  EXPECT_NEAR(per[0], -0.2, 1e-9);
  EXPECT_NEAR(per[1], -0.6, 1e-9);
  EXPECT_NEAR(symmetric_loss(f), -0.4, 1e-9);
}

TEST(SymmetricLossTest, EmptyBatchIsAnError) {
  SimSiamForward f{Tensor({0, 4}), Tensor({0, 4}), Tensor({0, 4}), Tensor({0, 4})};
  EXPECT_THROW(symmetric_loss(f), DimensionError);
}

TEST(SymmetricLossTest, EpsilonGuardKeepsZeroVectorsFinite) {
  SimSiamForward f = single_sample({0, 0}, {1, 0}, {1, 0}, {0, 0});
  EXPECT_EQ(symmetric_loss(f), 0.0);
  auto g = symmetric_loss_gradients(f);
  for (double v : g.dp1.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(SymmetricLossTest, ViewSwapSymmetry) {
  SimSiamModel model = make_toy_model(30);
  Tensor a = random_images(4, 16, 31), b = random_images(4, 16, 32);
  const double ab = symmetric_loss(model.forward({a, b}, Mode::kEval));
  const double ba = symmetric_loss(model.forward({b, a}, Mode::kEval));
  EXPECT_NEAR(ab, ba, 1e-7);
}

TEST(SymmetricLossTest, IdentityPredictorAndIdenticalViewsAttainMinimum) {
  SimSiamModel model = make_toy_model(33);
  model.set_identity_predictor(true);
  Tensor x = random_images(4, 16, 34);
  EXPECT_NEAR(symmetric_loss(model.forward({x, x}, Mode::kEval)), -1.0, 1e-6);
}

TEST(SymmetricLossTest, GradientOfGuardedLossMatchesFiniteDifferences) {
  Rng rng(35);
  SimSiamForward f{Tensor({3, 5}), Tensor({3, 5}), Tensor({3, 5}), Tensor({3, 5})};
  for (Tensor* t : {&f.z1, &f.z2, &f.p1, &f.p2})
    for (double& v : t->values()) v = rng.normal();
  auto g = symmetric_loss_gradients(f, false);
  const double h = 1e-6;
  for (auto [t, grad] : {std::pair{&f.p1, &g.dp1}, {&f.z1, &g.dz1}}) {
    for (std::size_t k = 0; k < t->size(); ++k) {
      const double saved = (*t)[k];
      (*t)[k] = saved + h;
      const double up = symmetric_loss(f);
      (*t)[k] = saved - h;
      const double down = symmetric_loss(f);
      (*t)[k] = saved;
      EXPECT_LT(testing::relative_error((*grad)[k], (up - down) / (2 * h)), 1e-5);
    }
  }
}

// ---------------------------------------------------------------- collapse_statistic

TEST(CollapseStatisticTest, IdenticalRowsGiveZero) {
  Tensor z({5, 3});
  for (int i = 0; i < 5; ++i) {
    z.at(i, 0) = 1;
    z.at(i, 1) = -2;
    z.at(i, 2) = 0.5;
  }
  EXPECT_NEAR(collapse_statistic(z), 0.0, 1e-15);
}

TEST(CollapseStatisticTest, IsotropicUnitVectorsNearInverseSqrtDim) {
  const int n = 4000, d = 64;
  Rng rng(36);
  Tensor z({n, d});
  for (double& v : z.values()) v = rng.normal();
  const double stat = collapse_statistic(z);
  // Monte-Carlo oracle: the per-coordinate std of a uniform point on the
  // sphere S^{d-1} is exactly 1/sqrt(d).
  const double expected = 1.0 / std::sqrt(static_cast<double>(d));
  EXPECT_NEAR(stat, expected, 0.2 * expected);
}

TEST(CollapseStatisticTest, NeedsTwoRows) {
  EXPECT_THROW(collapse_statistic(Tensor({1, 4}, 1.0)), DimensionError);
}

// ---------------------------------------------------------------- checkpoint

TEST(CheckpointTest, RoundTripIsByteIdentical) {
  SimSiamModel model = make_toy_model(40);
  model.forward_backward({random_images(4, 16, 41), random_images(4, 16, 42)});
  const Checkpoint ckpt = capture(model, 17, "synthetic");
  const auto dir = std::filesystem::temp_directory_path() / "rsrep_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string h1 = save_checkpoint(dir / "a.ckpt", ckpt);
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded, ckpt);
  const std::string h2 = save_checkpoint(dir / "b.ckpt", loaded);
  EXPECT_EQ(h1, h2);
  EXPECT_EQ(serialize(loaded), serialize(ckpt));

  SimSiamModel other = make_toy_model(99);
  restore(other, loaded);
  EXPECT_EQ(state_hash(other.encoder()), state_hash(model.encoder()));
  EXPECT_EQ(loaded.iteration, 17);
  EXPECT_EQ(loaded.source_dataset, "synthetic");
  std::filesystem::remove_all(dir);
}

TEST(CheckpointTest, CorruptionIsDetected) {
  SimSiamModel model = make_toy_model(43);
  auto bytes = serialize(capture(model, 0, "x"));
  bytes[bytes.size() / 2] ^= 0x1;
  EXPECT_THROW(deserialize(bytes), IoError);
}

}  // namespace
}  // namespace rsrep
