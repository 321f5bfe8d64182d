#ifndef CAMOBREW_ATTACK_HPP
#define CAMOBREW_ATTACK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/linalg.hpp"
#include "camobrew/model.hpp"
#include "camobrew/rng.hpp"

namespace camobrew {

/// (epsilon, b_p, b_c): l-infinity bound in raw feature units and budgets as
/// percentages of the clean training pool.
struct ThreatModel {
  double epsilon = 16.0;
  double b_p = 0.2;
  double b_c = 0.4;

  void validate() const {
    require(std::isfinite(epsilon) && epsilon >= 0, ErrorKind::precondition, "epsilon must be finite and >= 0");
    require(b_p >= 0 && b_p <= 100, ErrorKind::precondition, "poison budget must be in [0, 100] percent");
    require(b_c >= 0 && b_c <= 100, ErrorKind::precondition, "camouflage budget must be in [0, 100] percent");
  }

  static std::size_t count(double percent, std::size_t pool) {
    return static_cast<std::size_t>(std::llround(percent / 100.0 * static_cast<double>(pool)));
  }
  std::size_t poison_count(std::size_t pool) const { return count(b_p, pool); }
  std::size_t camouflage_count(std::size_t pool) const { return count(b_c, pool); }
};

/// One or more held-out targets sharing a true class, plus the label the
/// attacker wants them to receive.
struct TargetSpec {
  std::vector<Example> targets;
  int y_adversarial = 0;

  int y_target() const { return targets.front().label; }

  void validate(const ModelSpec& spec) const {
    require(!targets.empty(), ErrorKind::precondition, "target list is empty");
    for (const auto& t : targets) {
      require(t.features.size() == spec.input_dim, ErrorKind::dimension, "target dimension mismatch");
      require(t.label == targets.front().label, ErrorKind::precondition, "targets must share one true label");
    }
    require(y_adversarial >= 0 && y_adversarial < spec.num_classes, ErrorKind::precondition,
            "adversarial label out of range");
    require(y_adversarial != y_target(), ErrorKind::precondition, "adversarial label equals the target label");
  }
};

struct PerturbationEntry {
  std::int64_t example_id = 0;
  std::vector<float> delta;
};

struct PerturbationSet {
  std::vector<PerturbationEntry> entries;
  double epsilon = 0.0;
  bool quantized = false;
  /// Cosine loss of the selected restart, before any quantization.
  std::optional<double> phi_final;
  /// Cosine loss re-evaluated at the quantized deltas.
  std::optional<double> phi_quantized;
};

struct BrewConfig {
  int restarts = 1;
  int steps = 250;
  double adam_lr = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool quantize = false;
  std::uint64_t seed = 0;

  /// Step size 1e-3 on unit-scaled pixels, expressed in raw 0..255 units.
  static BrewConfig svm_preset() {
    BrewConfig c;
    c.adam_lr = 0.001 * 255.0;
    c.quantize = true;
    return c;
  }

  void validate() const {
    require(restarts >= 1, ErrorKind::precondition, "restarts must be >= 1");
    require(steps >= 0, ErrorKind::precondition, "steps must be >= 0");
    require(adam_lr > 0, ErrorKind::precondition, "adam learning rate must be > 0");
    require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, ErrorKind::precondition,
            "adam betas must be in [0,1)");
    require(adam_eps > 0, ErrorKind::precondition, "adam eps must be > 0");
  }
};

/// A training example the attacker may perturb.
struct BrewBase {
  std::int64_t id;
  std::span<const float> features;
  int label;
};

/// Row-major block of per-base delta vectors.
class DeltaBlock {
 public:
  DeltaBlock() = default;
  DeltaBlock(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// 1 - <t, s> / (|t| |s|)
inline double phi_cosine(std::span<const double> t, std::span<const double> s) {
  require(t.size() == s.size(), ErrorKind::dimension, "phi_cosine: vectors differ in length");
  const double nt = linalg::norm(t);
  const double ns = linalg::norm(s);
  require(nt > 0 && ns > 0, ErrorKind::degenerate, "phi_cosine: zero-norm gradient");
  return 1.0 - linalg::dot(t, s) / (nt * ns);
}

/// Mean parameter gradient over the targets, labelled adversarially
/// (poison brewing) or with their true label (camouflage brewing).
inline std::vector<double> target_gradient(const ModelParams& params, const TargetSpec& targets,
                                           bool use_adversarial_label) {
  params.validate();
  targets.validate(params.spec);
  std::vector<double> t(params.theta.size(), 0.0);
  detail::Workspace ws;
  const double w = 1.0 / static_cast<double>(targets.targets.size());
  for (const auto& ex : targets.targets) {
    const std::span<const float> x = ex.features;
    detail::forward(params.spec, params.theta, x, ws);
    detail::loss_and_delta(params.spec, use_adversarial_label ? targets.y_adversarial : ex.label, ws);
    detail::accumulate_grad(params.spec, params.theta, x, w, ws, t);
  }
  return t;
}

namespace detail {
inline void perturbed(std::span<const float> base, std::span<const double> delta, std::vector<double>& out) {
  out.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = static_cast<double>(base[i]) + delta[i];
}
}  // namespace detail

/// Sum over bases of grad_theta loss(base + delta, label), in base order.
inline std::vector<double> perturbed_grad_sum(const ModelParams& params, std::span<const BrewBase> bases,
                                              const DeltaBlock& deltas) {
  require(bases.size() == deltas.rows(), ErrorKind::dimension, "perturbed_grad_sum: bases and deltas differ in count");
  std::vector<double> s(params.theta.size(), 0.0);
  detail::Workspace ws;
  std::vector<double> x;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    detail::perturbed(bases[i].features, deltas.row(i), x);
    const std::span<const double> xs = x;
    detail::forward(params.spec, params.theta, xs, ws);
    detail::loss_and_delta(params.spec, bases[i].label, ws);
    detail::accumulate_grad(params.spec, params.theta, xs, 1.0, ws, s);
  }
  return s;
}

struct PhiGradient {
  double phi = 0.0;
  DeltaBlock grad;
};

/// phi and its gradient in every delta. With w = t/(|t||s|) - <t,s>/(|t||s|^3) s,
/// d phi / d delta_i = -grad_x <w, grad_theta loss(x_i + delta_i, y_i)>.
inline PhiGradient phi_and_gradient(const ModelParams& params, std::span<const double> t,
                                    std::span<const BrewBase> bases, const DeltaBlock& deltas) {
  const auto s = perturbed_grad_sum(params, bases, deltas);
  const double nt = linalg::norm(t);
  const double ns = linalg::norm<double>(s);
  require(nt > 0, ErrorKind::degenerate, "target gradient has zero norm");
  require(ns > 0, ErrorKind::degenerate, "perturbed gradient sum has zero norm");
  const double ts = linalg::dot<double, double>(t, s);
  std::vector<double> w(t.size());
  const double a = 1.0 / (nt * ns);
  const double b = ts / (nt * ns * ns * ns);
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = -(a * t[j] - b * s[j]);

  PhiGradient out{1.0 - ts * a, DeltaBlock(deltas.rows(), deltas.dim())};
  std::vector<double> x;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    detail::perturbed(bases[i].features, deltas.row(i), x);
    const auto g = mixed_vjp<double>(params, x, bases[i].label, w);
    std::copy(g.begin(), g.end(), out.grad.row(i).begin());
  }
  return out;
}

inline DeltaBlock grad_phi_wrt_deltas(const ModelParams& params, std::span<const double> t,
                                      std::span<const BrewBase> bases, const DeltaBlock& deltas) {
  return phi_and_gradient(params, t, bases, deltas).grad;
}

inline double phi_at(const ModelParams& params, std::span<const double> t, std::span<const BrewBase> bases,
                     const DeltaBlock& deltas) {
  return phi_cosine(t, perturbed_grad_sum(params, bases, deltas));
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamHyper {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam descent step on `x`.
inline void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad, const AdamHyper& h) {
  require(state.m.size() == x.size() && grad.size() == x.size(), ErrorKind::dimension, "adam_step: size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * grad[i];
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    x[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

/// Clamp each delta to [-eps, eps], then keep base + delta inside `range`.
inline void project_gamma(DeltaBlock& deltas, double epsilon, std::span<const BrewBase> bases,
                          const FeatureRange& range) {
  require(bases.size() == deltas.rows(), ErrorKind::dimension, "project_gamma: bases and deltas differ in count");
  for (std::size_t i = 0; i < bases.size(); ++i) {
    auto d = deltas.row(i);
    const auto x = bases[i].features;
    for (std::size_t j = 0; j < d.size(); ++j) {
      double v = std::clamp(d[j], -epsilon, epsilon);
      const double base = static_cast<double>(x[j]);
      if (base + v > range.hi) v = range.hi - base;
      if (base + v < range.lo) v = range.lo - base;
      d[j] = v;
    }
  }
}

/// Outcome of a gradient-matching brew.
struct BrewReport {
  PerturbationSet set;
  /// Final phi per restart; empty when that restart was aborted.
  std::vector<std::optional<double>> restart_phi;
  std::vector<std::string> log;
};

namespace detail {

/// Largest float not exceeding the bound semantics of Gamma.
inline float finalize_delta(float base, double v, double epsilon, const FeatureRange& range) {
  float f = static_cast<float>(v);
  const auto ok = [&](float c) {
    const double dc = c;
    return std::fabs(dc) <= epsilon && range.contains(static_cast<double>(base) + dc);
  };
  for (int guard = 0; guard < 8 && !ok(f); ++guard) f = std::nextafter(f, 0.0f);
  return ok(f) ? f : 0.0f;
}

inline PerturbationSet to_set(std::span<const BrewBase> bases, const DeltaBlock& deltas, double epsilon,
                              const FeatureRange& range, bool quantized) {
  PerturbationSet set;
  set.epsilon = epsilon;
  set.quantized = quantized;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    PerturbationEntry e{bases[i].id, std::vector<float>(deltas.dim())};
    for (std::size_t j = 0; j < deltas.dim(); ++j)
      e.delta[j] = finalize_delta(bases[i].features[j], deltas.row(i)[j], epsilon, range);
    set.entries.push_back(std::move(e));
  }
  return set;
}

}  // namespace detail

/// Restarted Adam minimization of phi(delta) over Gamma. Returns the restart
/// with the smallest final phi.
inline BrewReport brew_gradient_matching(const ModelParams& params, std::span<const double> target_grad,
                                         std::span<const BrewBase> bases, double epsilon, const FeatureRange& range,
                                         const BrewConfig& cfg) {
  cfg.validate();
  params.validate();
  require(std::isfinite(epsilon) && epsilon >= 0, ErrorKind::precondition, "epsilon must be finite and >= 0");
  require(linalg::norm(target_grad) > 0, ErrorKind::degenerate, "target gradient has zero norm");
  const std::size_t dim = params.spec.input_dim;
  for (const auto& b : bases) require(b.features.size() == dim, ErrorKind::dimension, "base dimension mismatch");

  BrewReport report;
  std::optional<DeltaBlock> best;
  double best_phi = std::numeric_limits<double>::infinity();
  const AdamHyper hyper{cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  constexpr int kRedraws = 10;

  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, {"restart", r}));
    DeltaBlock deltas(bases.size(), dim);
    bool nondegenerate = false;
    for (int attempt = 0; attempt <= kRedraws && !nondegenerate; ++attempt) {
      for (double& v : deltas.flat()) v = uniform(rng, -epsilon, epsilon);
      project_gamma(deltas, epsilon, bases, range);
      nondegenerate = linalg::norm<double>(perturbed_grad_sum(params, bases, deltas)) > 0;
      if (!nondegenerate) report.log.push_back("restart " + std::to_string(r) + ": zero gradient sum, redrawing");
    }
    require(nondegenerate, ErrorKind::degenerate,
            "perturbed gradient sum stays zero after " + std::to_string(kRedraws) + " redraws");

    AdamState state(deltas.flat().size());
    bool aborted = false;
    for (int k = 0; k < cfg.steps; ++k) {
      PhiGradient pg;
      try {
        pg = phi_and_gradient(params, target_grad, bases, deltas);
      } catch (const Error& e) {
        report.log.push_back("restart " + std::to_string(r) + " aborted at step " + std::to_string(k) + ": " + e.what());
        aborted = true;
        break;
      }
      const bool finite = std::isfinite(pg.phi) &&
                          std::all_of(pg.grad.flat().begin(), pg.grad.flat().end(), [](double v) { return std::isfinite(v); });
      if (!finite) {
        report.log.push_back("restart " + std::to_string(r) + " aborted at step " + std::to_string(k) + ": non-finite phi");
        aborted = true;
        break;
      }
      adam_step(state, deltas.flat(), pg.grad.flat(), hyper);
      project_gamma(deltas, epsilon, bases, range);
    }
    std::optional<double> final_phi;
    if (!aborted) {
      try {
        const double phi = phi_at(params, target_grad, bases, deltas);
        if (std::isfinite(phi)) final_phi = phi;
      } catch (const Error& e) {
        report.log.push_back("restart " + std::to_string(r) + " final evaluation failed: " + e.what());
      }
    }
    report.restart_phi.push_back(final_phi);
    if (final_phi && *final_phi < best_phi) {
      best_phi = *final_phi;
      best = std::move(deltas);
    }
  }
  require(best.has_value(), ErrorKind::degenerate, "every restart was aborted");

  if (cfg.quantize) {
    // Integer-valued poisoned features; the clamp bound floors epsilon so
    // the rounded deltas stay integral.
    DeltaBlock q = *best;
    for (std::size_t i = 0; i < bases.size(); ++i) {
      auto d = q.row(i);
      for (std::size_t j = 0; j < dim; ++j) {
        const double base = bases[i].features[j];
        d[j] = std::nearbyint(base + d[j]) - base;
      }
    }
    project_gamma(q, std::floor(epsilon), bases, range);
    report.set = detail::to_set(bases, q, epsilon, range, true);
    report.set.phi_final = best_phi;
    try {
      report.set.phi_quantized = phi_at(params, target_grad, bases, q);
    } catch (const Error&) {
      report.log.push_back("quantized deltas give a zero gradient sum");
    }
    return report;
  }
  report.set = detail::to_set(bases, *best, epsilon, range, false);
  report.set.phi_final = best_phi;
  return report;
}

inline BrewReport brew_poisons(const ModelParams& theta_clean, const TargetSpec& targets,
                               std::span<const BrewBase> bases, const ThreatModel& threat, const FeatureRange& range,
                               const BrewConfig& cfg) {
  threat.validate();
  for (const auto& b : bases)
    require(b.label == targets.y_adversarial, ErrorKind::precondition,
            "poison base " + std::to_string(b.id) + " is not from the adversarial class");
  const auto t = target_gradient(theta_clean, targets, true);
  return brew_gradient_matching(theta_clean, t, bases, threat.epsilon, range, cfg);
}

inline BrewReport brew_camouflages(const ModelParams& theta_poisoned, const TargetSpec& targets,
                                   std::span<const BrewBase> bases, const ThreatModel& threat,
                                   const FeatureRange& range, const BrewConfig& cfg) {
  threat.validate();
  for (const auto& b : bases)
    require(b.label == targets.y_target(), ErrorKind::precondition,
            "camouflage base " + std::to_string(b.id) + " is not from the target class");
  const auto t = target_gradient(theta_poisoned, targets, false);
  return brew_gradient_matching(theta_poisoned, t, bases, threat.epsilon, range, cfg);
}

/// Binary-only: each poison (x, y) yields a camouflage (x, -y). Ids are
/// left to the caller.
inline std::vector<Example> label_flip_camouflage(const std::vector<Example>& poisons, int num_classes) {
  require(num_classes == 2, ErrorKind::precondition, "label-flip camouflage requires a binary task");
  std::vector<Example> out;
  out.reserve(poisons.size());
  for (const auto& p : poisons) {
    require(p.label == 0 || p.label == 1, ErrorKind::precondition, "label-flip camouflage: non-binary label");
    out.push_back({p.id, p.features, 1 - p.label});
  }
  return out;
}

/// Seeded shuffle of the rows labelled `cls`, first `count` of them.
inline std::vector<std::size_t> select_bases(const Dataset& pool, int cls, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < pool.size(); ++r)
    if (pool.label(r) == cls) rows.push_back(r);
  require(rows.size() >= count, ErrorKind::precondition,
          "class " + std::to_string(cls) + " has " + std::to_string(rows.size()) + " examples, budget needs " +
              std::to_string(count));
  Rng rng(seed);
  shuffle(rows, rng);
  rows.resize(count);
  return rows;
}

inline std::vector<BrewBase> bases_from_rows(const Dataset& pool, std::span<const std::size_t> rows) {
  std::vector<BrewBase> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back({pool.id(r), pool.features(r), pool.label(r)});
  return out;
}

inline std::vector<float> apply_delta(std::span<const float> base, std::span<const float> delta) {
  std::vector<float> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + delta[i];
  return out;
}

/// Checks the Gamma conditions: bounded deltas, only allowed ids touched,
/// perturbed features inside `range`. Returns a description of the first
/// violation, or nothing.
inline std::optional<std::string> gamma_violation(const PerturbationSet& set, const Dataset& pool,
                                                  const std::unordered_set<std::int64_t>& allowed_ids,
                                                  const FeatureRange& range) {
  std::unordered_set<std::int64_t> seen;
  for (const auto& e : set.entries) {
    if (!allowed_ids.count(e.example_id)) return "id " + std::to_string(e.example_id) + " is not budgeted";
    if (!seen.insert(e.example_id).second) return "id " + std::to_string(e.example_id) + " perturbed twice";
    const auto row = pool.find_row(e.example_id);
    if (!row) return "id " + std::to_string(e.example_id) + " is not in the pool";
    const auto x = pool.features(*row);
    if (e.delta.size() != x.size()) return "id " + std::to_string(e.example_id) + " has a wrong-sized delta";
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = e.delta[j];
      if (!(std::fabs(d) <= set.epsilon)) return "id " + std::to_string(e.example_id) + " exceeds epsilon";
      if (!range.contains(static_cast<double>(x[j]) + d))
        return "id " + std::to_string(e.example_id) + " leaves the feature range";
      const double v = static_cast<double>(x[j]) + d;
      if (set.quantized && v != std::nearbyint(v)) return "id " + std::to_string(e.example_id) + " is not integral";
    }
  }
  return std::nullopt;
}

}  // namespace camobrew

#endif  // CAMOBREW_ATTACK_HPP
