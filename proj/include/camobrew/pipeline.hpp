#ifndef CAMOBREW_PIPELINE_HPP
#define CAMOBREW_PIPELINE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "camobrew/attack.hpp"
#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/model.hpp"
#include "camobrew/rng.hpp"
#include "camobrew/train.hpp"

namespace camobrew {

enum class CamouflageMethod { gradient_matching, label_flip };
enum class RetrainSeed { fresh, reuse };

inline const char* to_string(CamouflageMethod m) {
  return m == CamouflageMethod::gradient_matching ? "gradient-matching" : "label-flip";
}
inline const char* to_string(RetrainSeed m) { return m == RetrainSeed::fresh ? "fresh" : "reuse"; }

struct ModelSetup {
  ModelSpec spec;
  TrainConfig train;
};

struct Scenario {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> validation;
  /// Victim model and training procedure.
  ModelSetup victim;
  /// Surrogate the attacker brews against; the victim itself when empty.
  std::optional<ModelSetup> attacker;
  ThreatModel threat;
  BrewConfig brew;
  CamouflageMethod camouflage = CamouflageMethod::gradient_matching;
  RetrainSeed retrain_seed = RetrainSeed::fresh;
  int num_trials = 10;
  std::uint64_t seed = 0;
  /// Fractions of poisons / camouflages the victim never sees.
  double drop_poison_fraction = 0.0;
  double drop_camouflage_fraction = 0.0;

  const ModelSetup& attacker_setup() const { return attacker ? *attacker : victim; }

  std::size_t poison_count() const { return threat.poison_count(train->size()); }
  std::size_t camouflage_count() const {
    return camouflage == CamouflageMethod::label_flip ? poison_count() : threat.camouflage_count(train->size());
  }

  void validate() const {
    require(train && validation, ErrorKind::config, "scenario needs a training and a validation split");
    require(!train->empty(), ErrorKind::precondition, "training split is empty");
    require(!validation->empty(), ErrorKind::precondition, "validation split is empty");
    require(train->dim() == validation->dim() && train->num_classes() == validation->num_classes(),
            ErrorKind::mismatch, "training and validation splits differ in shape");
    require(num_trials >= 1, ErrorKind::precondition, "number of trials must be >= 1");
    require(drop_poison_fraction >= 0 && drop_poison_fraction < 1 && drop_camouflage_fraction >= 0 &&
                drop_camouflage_fraction < 1,
            ErrorKind::precondition, "deletion fractions must be in [0, 1)");
    threat.validate();
    brew.validate();
    for (const ModelSetup* m : {&victim, &attacker_setup()}) {
      m->spec.validate();
      m->train.validate();
      require(m->spec.input_dim == train->dim() && m->spec.num_classes == train->num_classes(), ErrorKind::mismatch,
              "model " + m->spec.id() + " does not fit the dataset");
    }
    if (camouflage == CamouflageMethod::label_flip) {
      require(train->num_classes() == 2, ErrorKind::config, "label-flip camouflage requires a binary dataset");
      require(threat.camouflage_count(train->size()) == poison_count(), ErrorKind::config,
              "label-flip camouflage needs equal poison and camouflage budgets");
    }
    std::unordered_set<std::int64_t> ids;
    for (std::size_t r = 0; r < train->size(); ++r) ids.insert(train->id(r));
    for (std::size_t r = 0; r < validation->size(); ++r)
      require(!ids.count(validation->id(r)), ErrorKind::precondition,
              "validation id " + std::to_string(validation->id(r)) + " also appears in training");
  }
};

struct TrialPlan {
  int trial = 0;
  std::uint64_t seed = 0;
  std::int64_t target_id = 0;
  int y_target = 0;
  int y_adversarial = 0;
  std::vector<std::int64_t> poison_ids;
  /// Empty under label-flip camouflage, whose entries are new rows.
  std::vector<std::int64_t> camouflage_ids;
};

inline std::uint64_t trial_seed(std::uint64_t master, int trial) { return derive_seed(master, {"trial", trial}); }

inline TrialPlan derive_trial_plan(const Scenario& sc, int trial) {
  require(sc.validation && !sc.validation->empty(), ErrorKind::precondition, "validation split is empty");
  TrialPlan plan;
  plan.trial = trial;
  plan.seed = trial_seed(sc.seed, trial);
  Rng rng(derive_seed(plan.seed, {"plan"}));
  const Dataset& val = *sc.validation;
  const std::size_t row = uniform_index(rng, val.size());
  plan.target_id = val.id(row);
  plan.y_target = val.label(row);
  const int k = val.num_classes();
  if (k == 2) {
    plan.y_adversarial = 1 - plan.y_target;
  } else {
    const int pick = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k - 1)));
    plan.y_adversarial = pick >= plan.y_target ? pick + 1 : pick;
  }
  const Dataset& pool = *sc.train;
  for (std::size_t r : select_bases(pool, plan.y_adversarial, sc.poison_count(), derive_seed(plan.seed, {"poison-bases"})))
    plan.poison_ids.push_back(pool.id(r));
  if (sc.camouflage == CamouflageMethod::gradient_matching)
    for (std::size_t r : select_bases(pool, plan.y_target, sc.camouflage_count(), derive_seed(plan.seed, {"camouflage-bases"})))
      plan.camouflage_ids.push_back(pool.id(r));
  return plan;
}

/// Outcome of one trial. Stage fields are empty when the stage did not run.
struct TrialResult {
  TrialPlan plan;
  std::optional<std::string> failure;
  std::optional<std::string> failure_stage;

  bool poison_success = false;
  /// Present exactly when poisoning succeeded.
  std::optional<bool> camo_success;
  /// The model retrained after the unlearning request predicts y_adversarial.
  std::optional<bool> unlearn_success;
  bool joint_success = false;
  /// The camouflage stage had something to evaluate (poisoning succeeded and C > 0).
  bool camo_applicable = false;
  /// theta_cpc's recorded prediction agrees with a successful camouflage.
  std::optional<bool> stage2_consistent;

  std::optional<double> val_acc_clean;
  std::optional<double> val_acc_poisoned;
  std::optional<double> val_acc_camouflaged;
  std::optional<double> val_acc_unlearned;
  std::optional<double> phi_poison;
  std::optional<double> phi_poison_quantized;
  std::optional<double> phi_camo;
  std::optional<double> phi_camo_quantized;
  std::optional<int> pred_clean;
  std::optional<int> pred_poisoned;
  std::optional<int> pred_camouflaged;
  std::optional<int> pred_unlearned;

  std::size_t poisons_used = 0;
  std::size_t camouflages_used = 0;
  std::map<std::string, double> seconds;
};

/// Observes each perturbation set as it is produced, together with the ids
/// it was allowed to touch. Calls are serialized.
using PerturbationHook =
    std::function<void(const TrialPlan&, Role, const PerturbationSet&, const std::unordered_set<std::int64_t>&)>;

/// Models trained once per scenario on the untouched pool.
struct CleanModels {
  ModelParams victim;
  ModelParams attacker;
  double val_acc = 0.0;
};

inline CleanModels train_clean(const Scenario& sc) {
  CleanModels out;
  const auto full = DataView::all(*sc.train);
  TrainConfig cfg = sc.victim.train;
  cfg.seed = derive_seed(sc.seed, {"clean", cfg.seed});
  out.victim = train(sc.victim.spec, full, cfg);
  if (sc.attacker) {
    TrainConfig acfg = sc.attacker->train;
    acfg.seed = derive_seed(sc.seed, {"clean", acfg.seed});
    out.attacker = train(sc.attacker->spec, full, acfg);
  } else {
    out.attacker = out.victim;
  }
  out.val_acc = validation_accuracy(out.victim, *sc.validation);
  return out;
}

inline ModelParams unlearn_retrain(const ModelSpec& spec, const DataView& remaining, const TrainConfig& cfg) {
  require(remaining.count(Role::camouflage) == 0, ErrorKind::precondition,
          "unlearning set still holds camouflage rows");
  return train(spec, remaining, cfg);
}

/// (poison_success, camo_success); camo_success is absent unless poisoning succeeded.
inline std::pair<bool, std::optional<bool>> evaluate_success(int pred_poisoned, std::optional<int> pred_camouflaged,
                                                             const TrialPlan& plan) {
  const bool poisoned = pred_poisoned == plan.y_adversarial;
  if (!poisoned || !pred_camouflaged) return {poisoned, std::nullopt};
  return {true, *pred_camouflaged == plan.y_target};
}

inline std::pair<bool, std::optional<bool>> evaluate_success(const ModelParams& theta_cp, const ModelParams& theta_cpc,
                                                             std::span<const float> target, const TrialPlan& plan) {
  return evaluate_success(predict<float>(theta_cp, target), predict<float>(theta_cpc, target), plan);
}

namespace detail {

inline std::vector<std::size_t> rows_of(const Dataset& pool, const std::vector<std::int64_t>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) {
    const auto r = pool.find_row(id);
    require(r.has_value(), ErrorKind::precondition, "base id " + std::to_string(id) + " is not in the pool");
    rows.push_back(*r);
  }
  return rows;
}

/// Indices kept after dropping floor(fraction * n) of n entries uniformly,
/// always keeping at least one entry of a nonempty set.
inline std::vector<bool> keep_mask(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<bool> keep(n, true);
  if (n == 0 || fraction <= 0) return keep;
  std::size_t drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  drop = std::min(drop, n - 1);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  shuffle(idx, rng);
  for (std::size_t i = 0; i < drop; ++i) keep[idx[i]] = false;
  return keep;
}

struct StageClock {
  std::map<std::string, double>& out;
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  ~StageClock() {
    out[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace detail

/// S_cp of a trial: the pool minus every poison and camouflage base, plus
/// the poisoned versions of the bases. Entries whose `keep` flag is false
/// are left out.
inline DataView poisoned_view(const Scenario& sc, const TrialPlan& plan, const PerturbationSet& poisons,
                              const std::vector<bool>& keep = {}) {
  const Dataset& pool = *sc.train;
  std::unordered_set<std::int64_t> excluded(plan.poison_ids.begin(), plan.poison_ids.end());
  excluded.insert(plan.camouflage_ids.begin(), plan.camouflage_ids.end());
  DataView v(pool);
  for (std::size_t r = 0; r < pool.size(); ++r)
    if (!excluded.count(pool.id(r))) v.add_base_row(r, Role::clean);
  std::unordered_set<std::int64_t> budgeted(plan.poison_ids.begin(), plan.poison_ids.end());
  for (std::size_t i = 0; i < poisons.entries.size(); ++i) {
    const auto& e = poisons.entries[i];
    require(budgeted.erase(e.example_id) == 1, ErrorKind::mismatch,
            "poison entry " + std::to_string(e.example_id) + " is not a base of trial " + std::to_string(plan.trial));
    if (!keep.empty() && !keep[i]) continue;
    const std::size_t row = *pool.find_row(e.example_id);
    require(e.delta.size() == pool.dim(), ErrorKind::dimension, "poison entry has the wrong dimension");
    v.add_modified_row(row, apply_delta(pool.features(row), e.delta), Role::poison);
  }
  return v;
}

inline std::uint64_t poisoned_train_seed(const Scenario& sc, const TrialPlan& plan) {
  return derive_seed(plan.seed, {"train", "poisoned", sc.victim.train.seed});
}

/// Training sets and models of a trial, for analyses that need more than
/// the scored result.
struct TrialArtifacts {
  std::optional<DataView> poisoned;
  std::optional<DataView> camouflaged;
  std::optional<ModelParams> theta_poisoned;
  std::optional<ModelParams> theta_camouflaged;
};

/// Poisons replace their bases in every set. Clean rows are the pool minus
/// all poison and camouflage bases, so S_cp is exactly what is left after
/// the camouflages are unlearned.
inline TrialResult run_trial(const Scenario& sc, const TrialPlan& plan, const CleanModels& clean,
                             const PerturbationHook& hook = {}, TrialArtifacts* artifacts = nullptr) {
  TrialResult res;
  res.plan = plan;
  std::string stage = "setup";
  try {
    const Dataset& pool = *sc.train;
    const auto target_row = sc.validation->find_row(plan.target_id);
    require(target_row.has_value(), ErrorKind::precondition, "target id is not in the validation split");
    const auto target_x = sc.validation->features(*target_row);
    TargetSpec targets{{sc.validation->example(*target_row)}, plan.y_adversarial};
    const FeatureRange range = pool.feature_range;
    const auto poison_rows = detail::rows_of(pool, plan.poison_ids);
    const auto camo_rows = detail::rows_of(pool, plan.camouflage_ids);
    const bool same_model = !sc.attacker;

    res.val_acc_clean = clean.val_acc;
    res.pred_clean = predict<float>(clean.victim, target_x);

    stage = "poison-brew";
    PerturbationSet poisons;
    {
      detail::StageClock clock{res.seconds, stage};
      BrewConfig bc = sc.brew;
      bc.seed = derive_seed(plan.seed, {"poison-brew", sc.brew.seed});
      const auto bases = bases_from_rows(pool, poison_rows);
      if (!bases.empty()) {
        auto report = brew_poisons(clean.attacker, targets, bases, sc.threat, range, bc);
        poisons = std::move(report.set);
        res.phi_poison = poisons.phi_final;
        res.phi_poison_quantized = poisons.phi_quantized;
      }
      if (hook) hook(plan, Role::poison, poisons, {plan.poison_ids.begin(), plan.poison_ids.end()});
    }

    const auto poison_keep =
        detail::keep_mask(poisons.entries.size(), sc.drop_poison_fraction, derive_seed(plan.seed, {"drop-poisons"}));
    // Attacker's view of S_cp holds every poison; the victim's may not.
    const auto build_cp = [&](bool victim) { return poisoned_view(sc, plan, poisons, victim ? poison_keep : std::vector<bool>{}); };

    stage = "train-poisoned";
    const DataView victim_cp = build_cp(true);
    res.poisons_used = victim_cp.count(Role::poison);
    TrainConfig cp_cfg = sc.victim.train;
    cp_cfg.seed = poisoned_train_seed(sc, plan);
    ModelParams theta_cp;
    {
      detail::StageClock clock{res.seconds, stage};
      theta_cp = train(sc.victim.spec, victim_cp, cp_cfg);
    }
    res.val_acc_poisoned = validation_accuracy(theta_cp, *sc.validation);
    res.pred_poisoned = predict<float>(theta_cp, target_x);
    if (artifacts) {
      artifacts->poisoned = victim_cp;
      artifacts->theta_poisoned = theta_cp;
    }
    // Without any poison in the training set there is no attack to credit.
    res.poison_success = res.poisons_used > 0 && *res.pred_poisoned == plan.y_adversarial;
    if (!res.poison_success) return res;

    const std::size_t c = sc.camouflage_count();
    res.camo_applicable = c > 0;
    if (!res.camo_applicable) return res;

    stage = "camouflage";
    std::vector<Example> camo_rows_new;
    PerturbationSet camos;
    {
      detail::StageClock clock{res.seconds, stage};
      if (sc.camouflage == CamouflageMethod::gradient_matching) {
        ModelParams attacker_cp;
        if (same_model && sc.drop_poison_fraction == 0) {
          attacker_cp = theta_cp;
        } else {
          TrainConfig acfg = sc.attacker_setup().train;
          acfg.seed = derive_seed(plan.seed, {"train", "poisoned", acfg.seed});
          attacker_cp = train(sc.attacker_setup().spec, build_cp(false), acfg);
        }
        BrewConfig bc = sc.brew;
        bc.seed = derive_seed(plan.seed, {"camouflage-brew", sc.brew.seed});
        auto report = brew_camouflages(attacker_cp, targets, bases_from_rows(pool, camo_rows), sc.threat, range, bc);
        camos = std::move(report.set);
        res.phi_camo = camos.phi_final;
        res.phi_camo_quantized = camos.phi_quantized;
        if (hook) hook(plan, Role::camouflage, camos, {plan.camouflage_ids.begin(), plan.camouflage_ids.end()});
      } else {
        std::vector<Example> poisoned;
        for (std::size_t i = 0; i < poisons.entries.size(); ++i)
          poisoned.push_back({pool.id(poison_rows[i]),
                              apply_delta(pool.features(poison_rows[i]), poisons.entries[i].delta),
                              pool.label(poison_rows[i])});
        camo_rows_new = label_flip_camouflage(poisoned, pool.num_classes());
        std::int64_t next = 0;
        for (std::size_t r = 0; r < pool.size(); ++r) next = std::max(next, pool.id(r) + 1);
        for (std::size_t r = 0; r < sc.validation->size(); ++r) next = std::max(next, sc.validation->id(r) + 1);
        for (auto& ex : camo_rows_new) ex.id = next++;
      }
    }

    stage = "train-camouflaged";
    const std::size_t n_camo = sc.camouflage == CamouflageMethod::gradient_matching ? camos.entries.size()
                                                                                    : camo_rows_new.size();
    const auto camo_keep = detail::keep_mask(n_camo, sc.drop_camouflage_fraction, derive_seed(plan.seed, {"drop-camouflages"}));
    DataView victim_cpc = victim_cp;
    for (std::size_t i = 0; i < n_camo; ++i) {
      if (!camo_keep[i]) continue;
      if (sc.camouflage == CamouflageMethod::gradient_matching)
        victim_cpc.add_modified_row(camo_rows[i], apply_delta(pool.features(camo_rows[i]), camos.entries[i].delta),
                                    Role::camouflage);
      else
        victim_cpc.add_new(camo_rows_new[i].id, camo_rows_new[i].features, camo_rows_new[i].label, Role::camouflage);
    }
    res.camouflages_used = victim_cpc.count(Role::camouflage);
    require(victim_cpc.size() == victim_cp.count(Role::clean) + res.poisons_used + res.camouflages_used,
            ErrorKind::mismatch, "bookkeeping: |S_cpc| differs from clean + poisons + camouflages");
    TrainConfig cpc_cfg = sc.victim.train;
    cpc_cfg.seed = derive_seed(plan.seed, {"train", "camouflaged", cpc_cfg.seed});
    ModelParams theta_cpc;
    {
      detail::StageClock clock{res.seconds, stage};
      theta_cpc = train(sc.victim.spec, victim_cpc, cpc_cfg);
    }
    if (artifacts) {
      artifacts->camouflaged = victim_cpc;
      artifacts->theta_camouflaged = theta_cpc;
    }
    res.val_acc_camouflaged = validation_accuracy(theta_cpc, *sc.validation);
    res.pred_camouflaged = predict<float>(theta_cpc, target_x);
    res.camo_success = evaluate_success(*res.pred_poisoned, res.pred_camouflaged, plan).second;

    stage = "unlearn";
    const DataView remaining = victim_cpc.without(Role::camouflage);
    {
      const auto before = victim_cpc.ids();
      const auto after = remaining.ids();
      std::unordered_set<std::int64_t> removed(before.begin(), before.end());
      for (auto id : after) removed.erase(id);
      require(removed.size() == res.camouflages_used && after.size() + res.camouflages_used == before.size(),
              ErrorKind::mismatch, "bookkeeping: unlearning did not remove exactly the camouflage rows");
    }
    TrainConfig ul_cfg = sc.victim.train;
    ul_cfg.seed = sc.retrain_seed == RetrainSeed::reuse ? cp_cfg.seed
                                                        : derive_seed(plan.seed, {"train", "unlearned", ul_cfg.seed});
    ModelParams theta_ul;
    {
      detail::StageClock clock{res.seconds, stage};
      theta_ul = unlearn_retrain(sc.victim.spec, remaining, ul_cfg);
    }
    res.val_acc_unlearned = validation_accuracy(theta_ul, *sc.validation);
    res.pred_unlearned = predict<float>(theta_ul, target_x);
    res.unlearn_success = *res.pred_unlearned == plan.y_adversarial;
    res.joint_success = *res.camo_success && *res.unlearn_success;
    if (*res.camo_success) res.stage2_consistent = *res.pred_camouflaged == plan.y_target;
  } catch (const Error& e) {
    res.failure = e.what();
    res.failure_stage = stage;
  }
  return res;
}

struct Stat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  /// False when fewer than two values were available; std is then 0.
  bool std_defined = false;
};

inline std::optional<Stat> summarize(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  Stat s;
  s.n = v.size();
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.std_defined = true;
  }
  return s;
}

struct Summary {
  std::size_t trials = 0;
  std::size_t failures = 0;
  std::size_t poison_successes = 0;
  std::size_t camo_successes = 0;
  std::size_t camo_applicable = 0;
  std::size_t joint_successes = 0;
  std::size_t stage2_violations = 0;
  double poison_rate = 0.0;
  /// Conditioned on successful poisoning; absent when nothing was poisoned.
  std::optional<double> camo_rate;
  /// Camouflage successes over all trials.
  double camo_rate_all = 0.0;
  double joint_rate = 0.0;
  std::optional<Stat> acc_clean;
  std::optional<Stat> acc_poisoned;
  std::optional<Stat> acc_camouflaged;
  std::optional<Stat> acc_unlearned;
};

/// Failed trials count in every denominator.
inline Summary aggregate(std::vector<TrialResult> results) {
  require(!results.empty(), ErrorKind::precondition, "cannot aggregate an empty trial list");
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.plan.trial < b.plan.trial; });
  Summary s;
  s.trials = results.size();
  std::vector<double> clean, poisoned, camouflaged, unlearned;
  for (const auto& r : results) {
    s.failures += r.failure.has_value();
    s.poison_successes += r.poison_success;
    s.camo_successes += r.camo_success.value_or(false);
    s.camo_applicable += r.camo_applicable;
    s.joint_successes += r.joint_success;
    s.stage2_violations += r.stage2_consistent.has_value() && !*r.stage2_consistent;
    if (r.val_acc_clean) clean.push_back(*r.val_acc_clean);
    if (r.val_acc_poisoned) poisoned.push_back(*r.val_acc_poisoned);
    if (r.val_acc_camouflaged) camouflaged.push_back(*r.val_acc_camouflaged);
    if (r.val_acc_unlearned) unlearned.push_back(*r.val_acc_unlearned);
  }
  const double k = static_cast<double>(s.trials);
  s.poison_rate = static_cast<double>(s.poison_successes) / k;
  if (s.poison_successes > 0)
    s.camo_rate = static_cast<double>(s.camo_successes) / static_cast<double>(s.poison_successes);
  s.camo_rate_all = static_cast<double>(s.camo_successes) / k;
  s.joint_rate = static_cast<double>(s.joint_successes) / k;
  s.acc_clean = summarize(clean);
  s.acc_poisoned = summarize(poisoned);
  s.acc_camouflaged = summarize(camouflaged);
  s.acc_unlearned = summarize(unlearned);
  return s;
}

struct RunResult {
  std::vector<TrialResult> trials;
  Summary summary;
};

struct RunOptions {
  unsigned threads = 1;
  PerturbationHook on_perturbations;
  /// Reuse clean models trained elsewhere with the same scenario seeds.
  std::shared_ptr<const CleanModels> clean;
};

/// Runs every trial. Results are ordered by trial index whatever the
/// thread count, and each trial only depends on its own derived seeds.
inline RunResult run_scenario(const Scenario& sc, const RunOptions& opt = {}) {
  sc.validate();
  std::vector<TrialPlan> plans;
  for (int k = 0; k < sc.num_trials; ++k) plans.push_back(derive_trial_plan(sc, k));
  const auto clean = opt.clean ? opt.clean : std::make_shared<const CleanModels>(train_clean(sc));

  std::mutex hook_mutex;
  PerturbationHook hook;
  if (opt.on_perturbations)
    hook = [&](const TrialPlan& p, Role r, const PerturbationSet& s, const std::unordered_set<std::int64_t>& ids) {
      std::lock_guard lock(hook_mutex);
      opt.on_perturbations(p, r, s, ids);
    };

  RunResult out;
  out.trials.resize(plans.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) out.trials[i] = run_trial(sc, plans[i], *clean, hook);
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(plans.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  out.summary = aggregate(out.trials);
  return out;
}

}  // namespace camobrew

#endif  // CAMOBREW_PIPELINE_HPP
