#include <gtest/gtest.h>

#include <vector>

#include "camobrew/ablate.hpp"
#include "camobrew/report.hpp"
#include "support/scenarios.hpp"

using namespace camobrew;

TEST(RandomDeletion, ZeroFractionsReproduceBase) {
  const auto doc = fixture::small_config();
  const auto cfg = read_config(doc);
  const auto sc = fixture::scenario(doc);
  const auto base = run_scenario(sc);
  const auto rows = random_deletion(sc, {{0.0, 0.0}});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(report_text(make_report(cfg, sc, base)), report_text(make_report(cfg, sc, rows[0].run)));
}

TEST(RandomDeletion, FloorKeepsAtLeastOne) {
  const auto sc = fixture::scenario(fixture::with(fixture::small_config(), "threat.camouflage_budget=2.3"));
  ASSERT_EQ(sc.camouflage_count(), 2u);
  Scenario two = sc;
  two.threat.b_p = 2.3;
  ASSERT_EQ(two.poison_count(), 2u);
  const auto rows = random_deletion(two, {{0.99, 0.99}, {0.5, 0.0}});
  for (const auto& r : rows[0].run.trials) {
    ASSERT_FALSE(r.failure) << *r.failure;
    EXPECT_EQ(r.poisons_used, 1u);
    if (r.camo_applicable) EXPECT_EQ(r.camouflages_used, 1u);
  }
  for (const auto& r : rows[1].run.trials) {
    EXPECT_EQ(r.poisons_used, 1u);
    if (r.camo_applicable) EXPECT_EQ(r.camouflages_used, 2u);
  }
}

TEST(RandomDeletion, RejectsFullDeletion) {
  const auto sc = fixture::scenario(fixture::small_config());
  EXPECT_THROW(random_deletion(sc, {{1.0, 0.0}}), Error);
  EXPECT_THROW(random_deletion(sc, {}), Error);
}

TEST(TransferMatrix, DiagonalMatchesBase) {
  const auto sc = fixture::scenario(fixture::small_config());
  const ModelSetup linear = sc.victim;
  ModelSetup mlp = sc.victim;
  mlp.spec.family = Family::mlp1_softmax_crossentropy;
  mlp.spec.hidden_width = 8;
  const auto m = transfer_matrix(sc, {linear, mlp}, {linear, mlp});
  ASSERT_EQ(m.cells.size(), 2u);
  ASSERT_EQ(m.cells[0].size(), 2u);
  EXPECT_EQ(m.brew_ids[1], mlp.spec.id());

  for (std::size_t i = 0; i < 2; ++i) {
    Scenario own = sc;
    own.victim = i == 0 ? linear : mlp;
    own.attacker.reset();
    const auto s = run_scenario(own).summary;
    EXPECT_EQ(m.cells[i][i].poison_rate, s.poison_rate);
    EXPECT_EQ(m.cells[i][i].camo_rate, s.camo_rate);
    EXPECT_EQ(m.joint_rate(i, i), s.joint_rate);
  }
}

TEST(BudgetSweep, ZeroCamouflageBudgetIsNeverApplicable) {
  const auto sc = fixture::scenario(fixture::small_config());
  const auto rows = budget_sweep(sc, {{sc.threat.b_p, 0.0}, {sc.threat.b_p, sc.threat.b_c}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].summary.camo_applicable, 0u);
  EXPECT_EQ(rows[0].summary.camo_successes, 0u);
  EXPECT_EQ(rows[1].summary.poison_rate, run_scenario(sc).summary.poison_rate);
  EXPECT_THROW(budget_sweep(sc, {}), Error);
}

TEST(AugmentationSweep, RejectsFlipWithoutImageShape) {
  const auto sc = fixture::scenario(fixture::small_config());
  const auto rows = augmentation_sweep(sc, {AugmentPolicy::none});
  EXPECT_EQ(rows[0].summary.failures, 0u);
  EXPECT_EQ(rows[0].summary.poison_rate, run_scenario(sc).summary.poison_rate);
  try {
    augmentation_sweep(sc, {AugmentPolicy::hflip});
    FAIL() << "blob features have no image layout";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
}

TEST(AugmentationSweep, FlipRunsOnImages) {
  Dataset train(12, 2), val(12, 2);
  train.image_shape = val.image_shape = ImageShape{1, 3, 4};
  train.feature_range = val.feature_range = {0.0, 1.0};
  Rng rng(2);
  for (int i = 0; i < 60; ++i) {
    std::vector<double> x(12);
    for (double& v : x) v = uniform(rng, 0.0, 0.5) + 0.4 * (i % 2);
    (i < 40 ? train : val).add<double>(i, x, i % 2);
  }
  Scenario sc;
  sc.train = std::make_shared<const Dataset>(train);
  sc.validation = std::make_shared<const Dataset>(val);
  sc.victim.spec = {Family::linear_softmax_crossentropy, 12, 2};
  sc.victim.train.optimizer = FullBatchOptions{0.5, 60, 1e-3, 0.0, Reduction::mean};
  sc.threat = {0.1, 5.0, 5.0};
  sc.brew.steps = 20;
  sc.num_trials = 2;
  const auto rows = augmentation_sweep(sc, {AugmentPolicy::none, AugmentPolicy::hflip});
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.summary.failures, 0u);
}

TEST(HFlip, MirrorsEachRow) {
  const ImageShape shape{2, 2, 3};
  const std::vector<float> x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  EXPECT_EQ(hflip(x, shape), (std::vector<float>{3, 2, 1, 6, 5, 4, 9, 8, 7, 12, 11, 10}));
  EXPECT_EQ(hflip(hflip(x, shape), shape), x);
}

TEST(KsStatistic, KnownValues) {
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2}, {3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}), 0.5);
  EXPECT_THROW(ks_statistic({}, {1}), Error);
}

TEST(DistanceProfile, CountsAndHistograms) {
  Dataset pool(2, 2);
  pool.add<double>(0, std::vector<double>{0, 0}, 0);
  pool.add<double>(1, std::vector<double>{2, 0}, 0);
  pool.add<double>(2, std::vector<double>{0, 4}, 1);
  pool.add<double>(3, std::vector<double>{0, 6}, 1);
  DataView v(pool);
  v.add_base_row(0);
  v.add_base_row(1);
  v.add_modified_row(2, {0, 3}, Role::poison);
  v.add_modified_row(3, {1, 6}, Role::camouflage);
  ModelParams p{{Family::linear_binary_hinge, 2, 2}, {0.1, 0.2, 0.0}};
  const std::vector<float> target = {0, 0};
  const auto prof = feature_distance_profile(p, v, target, 4);
  EXPECT_EQ(prof.count(Role::clean), 2u);
  EXPECT_EQ(prof.count(Role::poison), 1u);
  EXPECT_EQ(prof.count(Role::camouflage), 1u);
  EXPECT_DOUBLE_EQ(prof.class_mean(Role::clean)[0], 1.0);
  EXPECT_DOUBLE_EQ(prof.to_target[1][0], 3.0);
  std::size_t total = 0;
  for (const auto& g : prof.class_mean_hist.counts)
    for (auto c : g) total += c;
  EXPECT_EQ(total, 4u);
  EXPECT_EQ(prof.class_mean_hist.edges.size(), 5u);
  ASSERT_TRUE(prof.ks_against_clean(Role::poison));
  const auto csv = histogram_csv(prof.class_mean_hist);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "bin_lo,bin_hi,clean,poison,camouflage");
}

TEST(DistanceProfile, TrialProfile) {
  const auto sc = fixture::scenario(fixture::small_config());
  const auto d = trial_distance_profile(sc, 0, 10);
  ASSERT_FALSE(d.result.failure);
  ASSERT_TRUE(d.profile);
  EXPECT_EQ(d.profile->count(Role::poison), sc.poison_count());
}
