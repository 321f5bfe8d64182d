// Walks a single trial stage by stage: clean model, poison brew, poisoned
// model, camouflage brew, camouflaged model, unlearning.
//
//   one_trial [config.json] [trial]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "camobrew/camobrew.hpp"

int main(int argc, char** argv) {
  using namespace camobrew;
  const std::string path = argc > 1 ? argv[1] : std::string(CAMOBREW_SOURCE_DIR) + "/configs/synthetic_mlp.json";
  const int trial = argc > 2 ? std::atoi(argv[2]) : 1;

  try {
    const auto cfg = load_config(path);
    const auto sc = build_scenario(cfg, load_splits(cfg.dataset));
    const auto plan = derive_trial_plan(sc, trial);
    std::printf("%s: %zu training rows, %zu poisons, %zu camouflages\n", sc.victim.spec.id().c_str(), sc.train->size(),
                sc.poison_count(), sc.camouflage_count());
    std::printf("target %lld, true class %d, adversarial class %d\n", static_cast<long long>(plan.target_id),
                plan.y_target, plan.y_adversarial);

    const auto clean = train_clean(sc);
    TrialArtifacts art;
    const auto r = run_trial(sc, plan, clean, {}, &art);
    const auto pred = [](const std::optional<int>& p) { return p ? std::to_string(*p) : std::string("-"); };
    const auto acc = [](const std::optional<double>& a) { return a ? 100 * *a : 0.0; };
    std::printf("clean        acc %5.1f%%  target -> %s\n", acc(r.val_acc_clean), pred(r.pred_clean).c_str());
    if (r.phi_poison) std::printf("poison brew  phi %.4f\n", *r.phi_poison);
    std::printf("poisoned     acc %5.1f%%  target -> %s  (%zu poisons used)\n", acc(r.val_acc_poisoned),
                pred(r.pred_poisoned).c_str(), r.poisons_used);
    if (r.phi_camo) std::printf("camo brew    phi %.4f\n", *r.phi_camo);
    if (r.pred_camouflaged)
      std::printf("camouflaged  acc %5.1f%%  target -> %s  (%zu camouflages used)\n", acc(r.val_acc_camouflaged),
                  pred(r.pred_camouflaged).c_str(), r.camouflages_used);
    if (r.pred_unlearned)
      std::printf("unlearned    acc %5.1f%%  target -> %s\n", acc(r.val_acc_unlearned), pred(r.pred_unlearned).c_str());
    if (r.failure) std::printf("failed in %s: %s\n", r.failure_stage->c_str(), r.failure->c_str());
    std::printf("joint success: %s\n", r.joint_success ? "yes" : "no");
  } catch (const Error& e) {
    std::fprintf(stderr, "one_trial: %s\n", e.what());
    return 1;
  }
  return 0;
}
