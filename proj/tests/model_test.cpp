#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "camobrew/model.hpp"
#include "camobrew/train.hpp"
#include "support/oracles.hpp"

using namespace camobrew;

namespace {

ModelParams linear_binary(Family f, std::vector<double> theta) {
  ModelSpec s = gen::spec(f, theta.size() - 1, 2);
  return {s, std::move(theta)};
}

Dataset two_blobs(std::size_t per_class, double gap, std::uint64_t seed) {
  Dataset d(2, 2);
  Rng rng(seed);
  std::int64_t id = 0;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      const double cx = c == 1 ? gap : -gap;
      std::vector<double> x = {cx + 0.3 * standard_normal(rng), 0.5 * standard_normal(rng)};
      d.add<double>(id++, x, c);
    }
  return d;
}

}  // namespace

TEST(Forward, LinearBinaryDotProduct) {
  const auto p = linear_binary(Family::linear_binary_hinge, {1, 0, 0, 0});
  const std::vector<double> x = {3, 0, 0};
  EXPECT_DOUBLE_EQ(forward<double>(p, x)[0], 3.0);
}

TEST(Forward, ZeroInputGivesZeroScore) {
  const auto p = linear_binary(Family::linear_binary_linear_loss, {0.3, -2.0, 5.0, 0.0});
  const std::vector<double> x = {0, 0, 0};
  EXPECT_EQ(forward<double>(p, x)[0], 0.0);
}

TEST(Forward, ZeroMlpGivesZeroScores) {
  const auto s = gen::spec(Family::mlp1_softmax_crossentropy, 4, 3, Preprocessing::none, Activation::tanh, 2);
  const ModelParams p{s, std::vector<double>(s.param_count(), 0.0)};
  const std::vector<double> x = {1, -2, 3, 4};
  for (double v : forward<double>(p, x)) EXPECT_EQ(v, 0.0);
}

TEST(Forward, DimensionMismatchIsStructured) {
  const auto p = linear_binary(Family::linear_binary_hinge, {1, 0, 0, 0});
  const std::vector<double> x = {1, 2};
  try {
    forward<double>(p, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Forward, NonFiniteNamesLayer) {
  const auto s = gen::spec(Family::mlp1_softmax_crossentropy, 2, 2, Preprocessing::none, Activation::relu, 2);
  ModelParams p{s, std::vector<double>(s.param_count(), 1.0)};
  const std::vector<double> x = {std::numeric_limits<double>::infinity(), 0};
  try {
    loss<double>(p, x, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_finite);
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos);
  }
}

TEST(Loss, FamilyExamples) {
  const std::vector<double> x = {2.0};
  // hinge with y f = 2
  EXPECT_EQ(loss<double>(linear_binary(Family::linear_binary_hinge, {1.0, 0.0}), x, 1), 0.0);
  // linear loss, y = +1, f = 0.5
  const std::vector<double> half = {0.5};
  EXPECT_DOUBLE_EQ(loss<double>(linear_binary(Family::linear_binary_linear_loss, {1.0, 0.0}), half, 1), -0.5);
  // uniform two-class softmax
  const auto s = gen::spec(Family::linear_softmax_crossentropy, 1, 2);
  const ModelParams z{s, std::vector<double>(s.param_count(), 0.0)};
  EXPECT_NEAR(loss<double>(z, x, 0), std::log(2.0), 1e-15);
}

TEST(Loss, InvalidLabelRejected) {
  const std::vector<double> x = {1.0};
  EXPECT_THROW(loss<double>(linear_binary(Family::linear_binary_hinge, {1.0, 0.0}), x, 2), Error);
}

TEST(GradParams, LinearLossIsAnalytic) {
  const auto p = linear_binary(Family::linear_binary_linear_loss, {0.4, -0.1, 0.3});
  const std::vector<double> x = {2.0, -3.0};
  for (int c : {0, 1}) {
    const double y = signed_label(c);
    const auto g = grad_params<double>(p, x, c);
    EXPECT_DOUBLE_EQ(g[0], -y * 2.0);
    EXPECT_DOUBLE_EQ(g[1], -y * -3.0);
    EXPECT_DOUBLE_EQ(g[2], -y);
  }
}

TEST(GradParams, HingeBeyondMarginIsZero) {
  const auto p = linear_binary(Family::linear_binary_hinge, {1.0, 1.0, 0.0});
  const std::vector<double> x = {2.0, 1.0};
  for (double v : grad_params<double>(p, x, 1)) EXPECT_EQ(v, 0.0);
}

TEST(GradParams, HingeKinkUsesZeroBranch) {
  const auto p = linear_binary(Family::linear_binary_hinge, {1.0, 0.0});
  const std::vector<double> x = {1.0};
  for (double v : grad_params<double>(p, x, 1)) EXPECT_EQ(v, 0.0);
}

TEST(GradParams, MatchesFiniteDifferencesEveryFamily) {
  Rng rng(11);
  for (Family f : gen::families())
    for (Preprocessing pre : {Preprocessing::none, Preprocessing::l2_normalize, Preprocessing::unit_scale})
      for (int trial = 0; trial < 10; ++trial) {
        const auto s = gen::spec(f, 6, 3, pre);
        const auto p = gen::params(s, rng);
        const auto x = gen::normal_vector(rng, 6);
        const int y = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.num_classes)));
        if (f == Family::linear_binary_hinge && std::fabs(1 - signed_label(y) * forward<double>(p, x)[0]) < 1e-2)
          continue;
        EXPECT_LT(oracle::rel_error(grad_params<double>(p, x, y), oracle::fd_grad_params(p, x, y)), 1e-4)
            << to_string(f) << " " << to_string(pre);
      }
}

TEST(MixedVjp, LinearLossIsNegatedWeightBlock) {
  const auto p = linear_binary(Family::linear_binary_linear_loss, {0.4, -0.1, 0.3});
  const std::vector<double> x = {2.0, -3.0};
  const std::vector<double> w = {1.5, -2.5, 7.0};
  const auto g = mixed_vjp<double>(p, x, 1, w);
  EXPECT_DOUBLE_EQ(g[0], -1.5);
  EXPECT_DOUBLE_EQ(g[1], 2.5);
}

TEST(MixedVjp, HingeBeyondMarginIsZero) {
  const auto p = linear_binary(Family::linear_binary_hinge, {1.0, 1.0, 0.0});
  const std::vector<double> x = {2.0, 1.0};
  const std::vector<double> w = {1.0, 2.0, 3.0};
  for (double v : mixed_vjp<double>(p, x, 1, w)) EXPECT_EQ(v, 0.0);
}

TEST(MixedVjp, MatchesFiniteDifferencesEveryFamily) {
  Rng rng(12);
  for (Family f : gen::families())
    for (Preprocessing pre : {Preprocessing::none, Preprocessing::l2_normalize})
      for (Activation a : {Activation::tanh, Activation::relu})
        for (int trial = 0; trial < 8; ++trial) {
          const auto s = gen::spec(f, 5, 4, pre, a);
          const auto p = gen::params(s, rng);
          const auto x = gen::normal_vector(rng, 5);
          const auto w = gen::normal_vector(rng, s.param_count());
          const int y = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.num_classes)));
          if (f == Family::linear_binary_hinge && std::fabs(1 - signed_label(y) * forward<double>(p, x)[0]) < 1e-2)
            continue;
          EXPECT_LT(oracle::rel_error(mixed_vjp<double>(p, x, y, w), oracle::fd_mixed(p, x, y, w)), 1e-4)
              << to_string(f) << " " << to_string(pre) << " " << to_string(a);
        }
}

TEST(Predict, TieBreaks) {
  const auto b = gen::spec(Family::linear_binary_hinge, 1, 2);
  const std::vector<double> pos = {0.3}, zero = {0.0}, neg = {-0.1};
  EXPECT_EQ(signed_label(predict_from_scores(b, pos)), 1);
  EXPECT_EQ(signed_label(predict_from_scores(b, zero)), 1);
  EXPECT_EQ(signed_label(predict_from_scores(b, neg)), -1);
  const auto m = gen::spec(Family::linear_softmax_crossentropy, 1, 2);
  const std::vector<double> scores = {0.1, 0.9}, tie = {0.5, 0.5};
  EXPECT_EQ(predict_from_scores(m, scores), 1);
  EXPECT_EQ(predict_from_scores(m, tie), 0);
}

TEST(ValidationAccuracy, ExactRatios) {
  Dataset d(1, 2);
  d.add<double>(0, std::vector<double>{1.0}, 1);
  d.add<double>(1, std::vector<double>{-1.0}, 0);
  d.add<double>(2, std::vector<double>{2.0}, 1);
  d.add<double>(3, std::vector<double>{-3.0}, 0);
  EXPECT_EQ(validation_accuracy(linear_binary(Family::linear_binary_hinge, {1.0, 0.0}), d), 1.0);
  // Constant +1 classifier on a balanced set.
  EXPECT_EQ(validation_accuracy(linear_binary(Family::linear_binary_hinge, {0.0, 1.0}), d), 0.5);
  Dataset empty(1, 2);
  EXPECT_THROW(validation_accuracy(linear_binary(Family::linear_binary_hinge, {0.0, 1.0}), empty), Error);
}

TEST(Properties, SoftmaxAndLossBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = gen::spec(Family::mlp1_softmax_crossentropy, 4, 5);
    const auto p = gen::params(s, rng, 2.0);
    const auto x = gen::normal_vector(rng, 4, 3.0);
    detail::Workspace ws;
    detail::forward<double>(s, p.theta, x, ws);
    const double l = detail::loss_and_delta(s, 2, ws);
    double sum = 0;
    for (double q : ws.probs) sum += q;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_GE(l, 0.0);
    const auto h = gen::spec(Family::linear_binary_hinge, 4, 2);
    EXPECT_GE(loss<double>(gen::params(h, rng), x, trial % 2), 0.0);
  }
}

TEST(Train, SeparableBlobsReachFullTrainingAccuracy) {
  const Dataset d = two_blobs(40, 3.0, 1);
  const auto s = gen::spec(Family::linear_binary_hinge, 2, 2);
  TrainConfig cfg;
  cfg.optimizer = FullBatchOptions{0.1, 500, 1e-4, 0.0, Reduction::mean};
  const auto p = train(s, d, cfg);
  EXPECT_EQ(validation_accuracy(p, d), 1.0);
  EXPECT_TRUE(std::isfinite(p.final_loss));
}

TEST(Train, ZeroStepsOrEpochsRejected) {
  const Dataset d = two_blobs(5, 3.0, 1);
  const auto s = gen::spec(Family::linear_binary_hinge, 2, 2);
  TrainConfig gd;
  gd.optimizer = FullBatchOptions{0.1, 0, 0, 0, Reduction::mean};
  EXPECT_THROW(train(s, d, gd), Error);
  TrainConfig sgd;
  SgdOptions o;
  o.epochs = 0;
  sgd.optimizer = o;
  EXPECT_THROW(train(s, d, sgd), Error);
}

TEST(Train, BitIdenticalForSameSeed) {
  const Dataset d = two_blobs(30, 1.0, 2);
  const auto s = gen::spec(Family::mlp1_softmax_crossentropy, 2, 2, Preprocessing::none, Activation::tanh, 8);
  TrainConfig cfg;
  SgdOptions o;
  o.batch_size = 7;
  o.epochs = 5;
  cfg.optimizer = o;
  cfg.seed = 99;
  const auto a = train(s, d, cfg);
  const auto b = train(s, d, cfg);
  EXPECT_EQ(a.theta, b.theta);
  cfg.seed = 100;
  EXPECT_NE(train(s, d, cfg).theta, a.theta);
}

TEST(Train, ConvexLossesDescendMonotonically) {
  const Dataset d = two_blobs(25, 0.5, 3);
  for (Family f : {Family::linear_binary_linear_loss, Family::linear_binary_hinge,
                   Family::linear_softmax_crossentropy}) {
    const auto s = gen::spec(f, 2, 2);
    TrainConfig cfg;
    cfg.optimizer = FullBatchOptions{1e-3, 300, 1e-2, 0.0, Reduction::mean};
    std::vector<double> objective;
    train(s, d, cfg, [&](int, std::span<const double>, double v) { objective.push_back(v); });
    ASSERT_EQ(objective.size(), 300u);
    for (std::size_t i = 1; i < objective.size(); ++i)
      EXPECT_LE(objective[i], objective[i - 1] + 1e-12) << to_string(f) << " step " << i;
  }
}

TEST(Train, DivergenceNamesTheStep) {
  const Dataset d = two_blobs(10, 1.0, 4);
  const auto s = gen::spec(Family::mlp1_softmax_crossentropy, 2, 2, Preprocessing::none, Activation::relu, 4);
  TrainConfig cfg;
  SgdOptions o;
  o.lr = 1e300;
  o.momentum = 0.0;
  o.batch_size = 20;
  cfg.optimizer = o;
  try {
    train(s, d, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_finite);
  }
}

TEST(Train, PreprocessingMustMatchDataset) {
  Dataset d = two_blobs(5, 1.0, 5);
  const auto s = gen::spec(Family::linear_binary_hinge, 2, 2, Preprocessing::l2_normalize);
  EXPECT_THROW(train(s, d, TrainConfig{}), Error);
  d.preprocessing = Preprocessing::l2_normalize;
  EXPECT_NO_THROW(train(s, d, TrainConfig{}));
}
