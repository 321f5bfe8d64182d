#ifndef CAMOBREW_ABLATE_HPP
#define CAMOBREW_ABLATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "camobrew/augment.hpp"
#include "camobrew/dataset.hpp"
#include "camobrew/model.hpp"
#include "camobrew/pipeline.hpp"

namespace camobrew {

struct BudgetRow {
  double b_p = 0.0;
  double b_c = 0.0;
  Summary summary;
};

/// One aggregate per (b_p, b_c) cell. Clean models are shared across cells.
inline std::vector<BudgetRow> budget_sweep(const Scenario& base, const std::vector<std::pair<double, double>>& cells,
                                           RunOptions opt = {}) {
  require(!cells.empty(), ErrorKind::precondition, "budget grid is empty");
  if (!opt.clean) opt.clean = std::make_shared<const CleanModels>(train_clean(base));
  std::vector<BudgetRow> rows;
  for (const auto& [bp, bc] : cells) {
    Scenario sc = base;
    sc.threat.b_p = bp;
    sc.threat.b_c = bc;
    rows.push_back({bp, bc, run_scenario(sc, opt).summary});
  }
  return rows;
}

struct DeletionRow {
  double poison_fraction = 0.0;
  double camouflage_fraction = 0.0;
  RunResult run;
};

/// The victim never trains on floor(f_p * P) poisons and floor(f_c * C)
/// camouflages, drawn uniformly per trial.
inline std::vector<DeletionRow> random_deletion(const Scenario& base,
                                                const std::vector<std::pair<double, double>>& fractions,
                                                RunOptions opt = {}) {
  require(!fractions.empty(), ErrorKind::precondition, "deletion list is empty");
  if (!opt.clean) opt.clean = std::make_shared<const CleanModels>(train_clean(base));
  std::vector<DeletionRow> rows;
  for (const auto& [fp, fc] : fractions) {
    Scenario sc = base;
    sc.drop_poison_fraction = fp;
    sc.drop_camouflage_fraction = fc;
    rows.push_back({fp, fc, run_scenario(sc, opt)});
  }
  return rows;
}

struct TransferMatrix {
  std::vector<std::string> brew_ids;
  std::vector<std::string> victim_ids;
  /// cells[i][j]: brewed on brew model i, trained and unlearned by victim j.
  std::vector<std::vector<Summary>> cells;

  double joint_rate(std::size_t i, std::size_t j) const { return cells[i][j].joint_rate; }
};

inline TransferMatrix transfer_matrix(const Scenario& base, const std::vector<ModelSetup>& brew_models,
                                      const std::vector<ModelSetup>& victim_models, const RunOptions& opt = {}) {
  require(!brew_models.empty() && !victim_models.empty(), ErrorKind::precondition, "transfer lists are empty");
  TransferMatrix m;
  for (const auto& b : brew_models) m.brew_ids.push_back(b.spec.id());
  for (const auto& v : victim_models) m.victim_ids.push_back(v.spec.id());
  RunOptions cell_opt = opt;
  cell_opt.clean.reset();
  for (const auto& b : brew_models) {
    m.cells.emplace_back();
    for (const auto& v : victim_models) {
      Scenario sc = base;
      sc.victim = v;
      sc.attacker = b;
      m.cells.back().push_back(run_scenario(sc, cell_opt).summary);
    }
  }
  return m;
}

struct AugmentationRow {
  AugmentPolicy policy = AugmentPolicy::none;
  Summary summary;
};

/// Victim training under each policy; brewing and evaluation never see augmented data.
inline std::vector<AugmentationRow> augmentation_sweep(const Scenario& base, const std::vector<AugmentPolicy>& policies,
                                                       const RunOptions& opt = {}) {
  require(!policies.empty(), ErrorKind::precondition, "augmentation list is empty");
  std::vector<AugmentationRow> rows;
  RunOptions cell_opt = opt;
  cell_opt.clean.reset();
  for (auto p : policies) {
    Scenario sc = base;
    sc.victim.train.augmentation = p;
    if (sc.attacker) sc.attacker->train.augmentation = p;
    rows.push_back({p, run_scenario(sc, cell_opt).summary});
  }
  return rows;
}

/// Two-sample Kolmogorov-Smirnov statistic, sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::precondition, "KS statistic needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

struct Histogram {
  std::vector<double> edges;
  /// counts[g][bin] for group g (clean, poison, camouflage).
  std::vector<std::vector<std::size_t>> counts;
};

struct DistanceProfile {
  /// Indexed by Role.
  std::vector<std::vector<double>> to_class_mean{3};
  std::vector<std::vector<double>> to_target{3};
  Histogram class_mean_hist;
  Histogram target_hist;

  const std::vector<double>& class_mean(Role r) const { return to_class_mean[static_cast<std::size_t>(r)]; }
  std::size_t count(Role r) const { return class_mean(r).size(); }

  /// KS statistic of a group's class-mean distances against the clean group.
  std::optional<double> ks_against_clean(Role r) const {
    if (class_mean(r).empty() || class_mean(Role::clean).empty()) return std::nullopt;
    return ks_statistic(class_mean(r), class_mean(Role::clean));
  }
};

namespace detail {
inline Histogram histogram(const std::vector<std::vector<double>>& groups, std::size_t bins) {
  require(bins >= 1, ErrorKind::precondition, "histogram needs >= 1 bin");
  double hi = 0.0;
  for (const auto& g : groups)
    for (double v : g) hi = std::max(hi, v);
  if (hi <= 0) hi = 1.0;
  Histogram h;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(hi * static_cast<double>(b) / static_cast<double>(bins));
  for (const auto& g : groups) {
    std::vector<std::size_t> c(bins, 0);
    for (double v : g) c[std::min(bins - 1, static_cast<std::size_t>(v / hi * static_cast<double>(bins)))]++;
    h.counts.push_back(std::move(c));
  }
  return h;
}
}  // namespace detail

/// Distances in feature space (preprocessed input for linear families,
/// hidden activations for mlp1) to each example's class mean and to the
/// target, grouped by role.
inline DistanceProfile feature_distance_profile(const ModelParams& params, const DataView& data,
                                                std::span<const float> target, std::size_t bins = 20) {
  params.validate();
  require(!data.empty(), ErrorKind::precondition, "distance profile of an empty dataset");
  const std::size_t k = static_cast<std::size_t>(data.num_classes());
  std::vector<std::vector<double>> feats(data.size());
  std::vector<std::vector<double>> mean(k);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    feats[i] = feature_map<float>(params, data.features(i));
    auto& m = mean[static_cast<std::size_t>(data.label(i))];
    if (m.empty()) m.assign(feats[i].size(), 0.0);
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += feats[i][j];
    ++count[static_cast<std::size_t>(data.label(i))];
  }
  for (std::size_t c = 0; c < k; ++c) {
    require(count[c] > 0, ErrorKind::precondition, "class " + std::to_string(c) + " has no examples");
    for (double& v : mean[c]) v /= static_cast<double>(count[c]);
  }
  const auto tf = feature_map<float>(params, target);
  const auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  };
  DistanceProfile p;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto g = static_cast<std::size_t>(data.role(i));
    p.to_class_mean[g].push_back(dist(feats[i], mean[static_cast<std::size_t>(data.label(i))]));
    p.to_target[g].push_back(dist(feats[i], tf));
  }
  p.class_mean_hist = detail::histogram(p.to_class_mean, bins);
  p.target_hist = detail::histogram(p.to_target, bins);
  return p;
}

/// (bin_lo, bin_hi, clean, poison, camouflage) rows.
inline std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,clean,poison,camouflage\n";
  char buf[64];
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g", h.edges[b], h.edges[b + 1]);
    out += buf;
    for (const auto& c : h.counts) out += "," + std::to_string(c[b]);
    out += "\n";
  }
  return out;
}

struct TrialDistance {
  TrialResult result;
  std::optional<DistanceProfile> profile;
};

/// Runs one trial and profiles the most poisoned training set it reached,
/// under the model trained on it.
inline TrialDistance trial_distance_profile(const Scenario& sc, int trial, std::size_t bins = 20) {
  sc.validate();
  const auto plan = derive_trial_plan(sc, trial);
  const auto clean = train_clean(sc);
  TrialArtifacts art;
  TrialDistance out{run_trial(sc, plan, clean, {}, &art), std::nullopt};
  const auto row = sc.validation->find_row(plan.target_id);
  if (art.camouflaged)
    out.profile = feature_distance_profile(*art.theta_camouflaged, *art.camouflaged, sc.validation->features(*row), bins);
  else if (art.poisoned)
    out.profile = feature_distance_profile(*art.theta_poisoned, *art.poisoned, sc.validation->features(*row), bins);
  return out;
}

}  // namespace camobrew

#endif  // CAMOBREW_ABLATE_HPP
