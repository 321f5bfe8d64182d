// Runs a small camouflaged-poisoning scenario on synthetic blobs and prints
// the summary row, using the library directly instead of a config file.

#include <cstdio>
#include <memory>

#include "camobrew/camobrew.hpp"

int main() {
  using namespace camobrew;

  io::BlobsConfig blobs;
  blobs.dim = 10;
  blobs.classes = 3;
  blobs.train_per_class = 60;
  blobs.validation_per_class = 20;
  blobs.separation = 0.8;
  blobs.seed = 3;
  auto splits = io::synth_blobs(blobs);

  Scenario sc;
  sc.train = std::make_shared<const Dataset>(std::move(splits.train));
  sc.validation = std::make_shared<const Dataset>(std::move(splits.validation));
  sc.victim.spec = {Family::mlp1_softmax_crossentropy, blobs.dim, blobs.classes, 16, Activation::tanh};
  sc.victim.train.optimizer = FullBatchOptions{0.5, 300, 1e-4, 0.0, Reduction::mean};
  sc.threat = {1.0, 3.0, 6.0};
  sc.brew.restarts = 2;
  sc.brew.steps = 150;
  sc.brew.adam_lr = 0.05;
  sc.num_trials = 5;
  sc.seed = 42;

  try {
    const auto run = run_scenario(sc);
    for (const auto& t : run.trials) {
      std::printf("trial %d: target %lld  poisoned=%d", t.plan.trial, static_cast<long long>(t.plan.target_id),
                  t.poison_success);
      if (t.camo_success) std::printf(" camouflaged=%d unlearned-poisoned=%d", *t.camo_success, *t.unlearn_success);
      if (t.failure) std::printf(" failed in %s: %s", t.failure_stage->c_str(), t.failure->c_str());
      std::printf("\n");
    }
    std::fputs(table_header().c_str(), stdout);
    std::fputs(table_row(attack_label(sc.camouflage, sc.threat), run.summary).c_str(), stdout);
    std::printf("joint success %.0f%%\n", 100 * run.summary.joint_rate);
  } catch (const Error& e) {
    std::fprintf(stderr, "quickstart: %s\n", e.what());
    return 1;
  }
  return 0;
}
