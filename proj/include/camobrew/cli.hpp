#ifndef CAMOBREW_CLI_HPP
#define CAMOBREW_CLI_HPP

#include <chrono>
#include <ctime>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "camobrew/ablate.hpp"
#include "camobrew/config.hpp"
#include "camobrew/io/artifacts.hpp"
#include "camobrew/io/datasets.hpp"
#include "camobrew/io/files.hpp"
#include "camobrew/pipeline.hpp"
#include "camobrew/report.hpp"

namespace camobrew {

/// Process exit code for each error category; 0 is success and 2 a usage error.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::precondition: return 3;
    case ErrorKind::dimension: return 4;
    case ErrorKind::non_finite: return 5;
    case ErrorKind::degenerate: return 6;
    case ErrorKind::parse: return 7;
    case ErrorKind::io: return 8;
    case ErrorKind::config: return 9;
    case ErrorKind::mismatch: return 10;
  }
  return 1;
}

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string rate(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * *v);
  return buf;
}

inline std::string summary_line(const Summary& s) {
  std::ostringstream o;
  o << "trials " << s.trials << ", failures " << s.failures << ", poisoning " << rate(s.poison_rate)
    << ", camouflaging " << rate(s.camo_rate) << ", joint " << rate(s.joint_rate);
  if (s.acc_clean) o << ", clean acc " << rate(s.acc_clean->mean);
  return o.str();
}

inline std::string rates_csv_header(const std::string& lead) {
  return lead + ",trials,failures,poisoning_rate,camouflaging_rate,camo_applicable,joint_rate,clean_acc_mean,"
                "poisoned_acc_mean,camouflaged_acc_mean,unlearned_acc_mean\n";
}

inline std::string rates_csv_row(const std::string& lead, const Summary& s) {
  const auto pct = [](std::optional<double> v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
    return std::string(buf);
  };
  const auto mean = [](const std::optional<Stat>& st) { return st ? std::optional(st->mean) : std::nullopt; };
  return lead + "," + std::to_string(s.trials) + "," + std::to_string(s.failures) + "," + pct(s.poison_rate) + "," +
         pct(s.camo_rate) + "," + std::to_string(s.camo_applicable) + "," + pct(s.joint_rate) + "," +
         pct(mean(s.acc_clean)) + "," + pct(mean(s.acc_poisoned)) + "," + pct(mean(s.acc_camouflaged)) + "," +
         pct(mean(s.acc_unlearned)) + "\n";
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

struct Loaded {
  RunConfig cfg;
  Scenario sc;
};

inline Loaded load(const Common& c) {
  Loaded l;
  l.cfg = load_config(c.config, c.overrides);
  l.sc = build_scenario(l.cfg, load_splits(l.cfg.dataset));
  return l;
}

inline io::PerturbationMeta pert_meta(const Loaded& l, const ModelParams& p, Role role) {
  return {hash_hex(content_hash(*l.sc.train)), p.spec.id(), io::brew_digest(l.sc.brew), to_string(role)};
}

inline int cmd_gen_data(const Common& c, std::ostream& out) {
  RunConfig cfg = load_config(c.config, c.overrides);
  require(cfg.dataset.kind == DatasetKind::synthetic_blobs, ErrorKind::config,
          "gen-data needs a synthetic-blobs dataset section");
  const auto splits = io::synth_blobs(cfg.dataset.blobs);
  const auto dir = io::output_dir(c.out);
  io::write_atomic(dir / "train.csv", io::to_csv(splits.train));
  io::write_atomic(dir / "validation.csv", io::to_csv(splits.validation));
  out << "wrote " << splits.train.size() << " training and " << splits.validation.size() << " validation rows to "
      << dir.string() << "\n";
  return 0;
}

/// Without a poison file this trains the clean model; with one, the
/// poisoned model of that trial, seeded as the pipeline seeds it.
inline int cmd_train(const Common& c, const std::string& poisons_path, int trial, std::ostream& out) {
  const auto l = load(c);
  ModelParams params;
  std::string what = "clean";
  if (poisons_path.empty()) {
    params = train_clean(l.sc).victim;
  } else {
    const auto plan = derive_trial_plan(l.sc, trial);
    const auto loaded = io::load_perturbations(poisons_path, hash_hex(content_hash(*l.sc.train)));
    TrainConfig cfg = l.sc.victim.train;
    cfg.seed = poisoned_train_seed(l.sc, plan);
    params = train(l.sc.victim.spec, poisoned_view(l.sc, plan, loaded.set), cfg);
    what = "poisoned (trial " + std::to_string(trial) + ")";
  }
  const auto path = io::output_dir(c.out) / (poisons_path.empty() ? "model.txt" : "model_poisoned.txt");
  io::save_model(params, path);
  out << l.sc.victim.spec.id() << " " << what << ": validation accuracy "
      << rate(validation_accuracy(params, *l.sc.validation)) << ", final objective " << fmt(params.final_loss)
      << "\nwrote " << path.string() << "\n";
  return 0;
}

inline ModelParams model_or_train(const Loaded& l, const std::string& path, bool poison) {
  if (!path.empty()) return io::load_model(path, l.sc.attacker_setup().spec);
  require(poison, ErrorKind::config, "brew-camo needs --model, the poisoned model (see train --poisons)");
  return train_clean(l.sc).attacker;
}

inline int cmd_brew(const Common& c, bool poison, const std::string& model_path, int trial, std::ostream& out) {
  const auto l = load(c);
  const auto plan = derive_trial_plan(l.sc, trial);
  const auto params = model_or_train(l, model_path, poison);
  const Dataset& pool = *l.sc.train;
  const auto row = l.sc.validation->find_row(plan.target_id);
  const TargetSpec targets{{l.sc.validation->example(*row)}, plan.y_adversarial};
  BrewConfig bc = l.sc.brew;
  bc.seed = derive_seed(plan.seed, {poison ? "poison-brew" : "camouflage-brew", l.sc.brew.seed});
  require(poison || l.sc.camouflage == CamouflageMethod::gradient_matching, ErrorKind::config,
          "brew-camo only brews gradient-matching camouflages");
  const auto rows = detail::rows_of(pool, poison ? plan.poison_ids : plan.camouflage_ids);
  const auto bases = bases_from_rows(pool, rows);
  const auto report = poison ? brew_poisons(params, targets, bases, l.sc.threat, pool.feature_range, bc)
                             : brew_camouflages(params, targets, bases, l.sc.threat, pool.feature_range, bc);
  const auto path = io::output_dir(c.out) / (poison ? "poisons.pert" : "camouflages.pert");
  io::save_perturbations(report.set, pert_meta(l, params, poison ? Role::poison : Role::camouflage), path);
  out << "trial " << trial << ": target " << plan.target_id << " (class " << plan.y_target << " -> "
      << plan.y_adversarial << "), " << report.set.entries.size() << " entries, phi "
      << (report.set.phi_final ? fmt(*report.set.phi_final) : "n/a") << "\nwrote " << path.string() << "\n";
  return 0;
}

inline int cmd_run(const Common& c, std::optional<int> trials, std::optional<unsigned> threads, bool timestamps,
                   std::ostream& out) {
  std::vector<std::string> overrides = c.overrides;
  if (trials) overrides.push_back("trials=" + std::to_string(*trials));
  if (threads) overrides.push_back("threads=" + std::to_string(*threads));
  RunConfig cfg = load_config(c.config, overrides);
  const std::string started = utc_now();
  const Scenario sc = build_scenario(cfg, load_splits(cfg.dataset));
  RunOptions opt;
  opt.threads = cfg.threads;
  const auto run = run_scenario(sc, opt);
  RunReport report = make_report(cfg, sc, run);
  if (timestamps) {
    report.started_at = started;
    report.finished_at = utc_now();
  }
  const auto dir = io::output_dir(c.out);
  emit_report(report, dir);
  out << summary_line(run.summary) << "\nwrote " << (dir / "report.json").string() << "\n";
  return 0;
}

inline int cmd_ablate(const Common& c, const std::string& axis_override, std::ostream& out) {
  std::vector<std::string> overrides = c.overrides;
  if (!axis_override.empty()) overrides.push_back("ablation.axis=\"" + axis_override + "\"");
  RunConfig cfg = load_config(c.config, overrides);
  const Scenario sc = build_scenario(cfg, load_splits(cfg.dataset));
  const auto& ab = cfg.ablation;
  RunOptions opt;
  opt.threads = cfg.threads;
  const auto dir = io::output_dir(c.out);
  json doc = {{"software", std::string("camobrew ") + CAMOBREW_VERSION},
              {"scenario", to_json(cfg)},
              {"axis", to_string(ab.axis)}};
  std::string csv;
  switch (ab.axis) {
    case AblationAxis::budget: {
      require(!ab.budgets.empty(), ErrorKind::config, "ablation.budgets is empty");
      csv = rates_csv_header("b_p,b_c");
      for (const auto& row : budget_sweep(sc, ab.budgets, opt)) {
        csv += rates_csv_row(fmt(row.b_p) + "," + fmt(row.b_c), row.summary);
        doc["rows"].push_back({{"b_p", row.b_p}, {"b_c", row.b_c}, {"summary", to_json(row.summary)}});
      }
      break;
    }
    case AblationAxis::deletion: {
      require(!ab.deletions.empty(), ErrorKind::config, "ablation.deletions is empty");
      csv = rates_csv_header("poison_fraction,camouflage_fraction");
      for (const auto& row : random_deletion(sc, ab.deletions, opt)) {
        csv += rates_csv_row(fmt(row.poison_fraction) + "," + fmt(row.camouflage_fraction), row.run.summary);
        doc["rows"].push_back({{"poison_fraction", row.poison_fraction},
                               {"camouflage_fraction", row.camouflage_fraction},
                               {"summary", to_json(row.run.summary)}});
      }
      break;
    }
    case AblationAxis::transfer: {
      std::vector<ModelSetup> brew, victim;
      for (const auto& m : ab.brew_models) brew.push_back(model_setup(m, *sc.train));
      for (const auto& m : ab.victim_models) victim.push_back(model_setup(m, *sc.train));
      if (brew.empty()) brew.push_back(sc.victim);
      if (victim.empty()) victim.push_back(sc.victim);
      const auto m = transfer_matrix(sc, brew, victim, opt);
      csv = "brew\\victim";
      for (const auto& v : m.victim_ids) csv += "," + v;
      csv += "\n";
      for (std::size_t i = 0; i < m.brew_ids.size(); ++i) {
        csv += m.brew_ids[i];
        json row = json::array();
        for (std::size_t j = 0; j < m.victim_ids.size(); ++j) {
          csv += "," + fmt(m.joint_rate(i, j));
          row.push_back(to_json(m.cells[i][j]));
        }
        csv += "\n";
        doc["cells"].push_back(row);
      }
      doc["brew_models"] = m.brew_ids;
      doc["victim_models"] = m.victim_ids;
      break;
    }
    case AblationAxis::augmentation: {
      auto policies = ab.augmentations;
      if (policies.empty()) policies = {AugmentPolicy::none, AugmentPolicy::hflip};
      csv = rates_csv_header("policy");
      for (const auto& row : augmentation_sweep(sc, policies, opt)) {
        csv += rates_csv_row(to_string(row.policy), row.summary);
        doc["rows"].push_back({{"policy", to_string(row.policy)}, {"summary", to_json(row.summary)}});
      }
      break;
    }
    case AblationAxis::distance: {
      const auto td = trial_distance_profile(sc, ab.trial, ab.bins);
      doc["trial"] = to_json(td.result);
      require(td.profile.has_value(), ErrorKind::precondition,
              "trial " + std::to_string(ab.trial) + " produced no training set to profile");
      const auto& p = *td.profile;
      for (Role r : {Role::poison, Role::camouflage}) {
        const auto ks = p.ks_against_clean(r);
        doc["ks_vs_clean"][to_string(r)] = ks ? json(*ks) : json(nullptr);
        doc["similar_to_clean"][to_string(r)] = ks ? json(*ks < ab.ks_threshold) : json(nullptr);
      }
      doc["ks_threshold"] = ab.ks_threshold;
      io::write_atomic(dir / "distance_class_mean.csv", histogram_csv(p.class_mean_hist));
      io::write_atomic(dir / "distance_target.csv", histogram_csv(p.target_hist));
      csv = "group,count,ks_vs_clean\n";
      for (Role r : {Role::clean, Role::poison, Role::camouflage}) {
        const auto ks = r == Role::clean ? std::optional<double>(0.0) : p.ks_against_clean(r);
        csv += std::string(to_string(r)) + "," + std::to_string(p.count(r)) + "," + (ks ? fmt(*ks) : "") + "\n";
      }
      break;
    }
  }
  io::write_atomic(dir / "ablation.csv", csv);
  io::write_atomic(dir / "ablation.json", doc.dump(2) + "\n");
  out << csv << "wrote " << (dir / "ablation.csv").string() << "\n";
  return 0;
}

inline int cmd_report(const std::string& input, const std::string& out_dir, std::ostream& out) {
  const RunReport r = load_report(input);
  const std::string original = io::read_file(input);
  require(report_text(r) == original, ErrorKind::parse, input + ": report does not round-trip byte-for-byte");
  const auto dir = io::output_dir(out_dir);
  io::write_atomic(dir / "summary.csv", summary_csv(r));
  out << summary_csv(r);
  return 0;
}

}  // namespace detail

/// Entry point of the camobrew tool.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Camouflaged poisoning attacks against retraining-based unlearning", "camobrew"};
  app.set_version_flag("--version", std::string(CAMOBREW_VERSION));
  app.require_subcommand(1);

  detail::Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "Scenario config file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "Override a config field, e.g. --set threat.epsilon=8");
    sub->add_option("-o,--out", common.out, "Output directory (default: $CAMOBREW_OUT_DIR or ./camobrew-out)");
  };

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset of a config as CSV");
  add_common(gen);
  std::string model_path;
  std::string poisons_path;
  int trial = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the clean model, or a trial's poisoned model, and save it");
  add_common(train_cmd);
  train_cmd->add_option("-p,--poisons", poisons_path, "Perturbation file from brew-poison")->check(CLI::ExistingFile);
  train_cmd->add_option("-t,--trial", trial, "Trial index the poisons belong to")->check(CLI::NonNegativeNumber);

  auto* brew_p = app.add_subcommand("brew-poison", "Brew the poison set of one trial against a clean model");
  auto* brew_c = app.add_subcommand("brew-camo", "Brew the camouflage set of one trial against a poisoned model");
  for (auto* sub : {brew_p, brew_c}) {
    add_common(sub);
    sub->add_option("-m,--model", model_path, "Model file to brew against (trained on the fly when omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("-t,--trial", trial, "Trial index whose plan is used")->check(CLI::NonNegativeNumber);
  }

  std::optional<int> trials;
  std::optional<unsigned> threads;
  bool timestamps = false;
  auto* run = app.add_subcommand("run", "Run every trial of a scenario and write the report");
  add_common(run);
  run->add_option("--trials", trials, "Number of trials (overrides the config)");
  run->add_option("--threads", threads, "Worker threads for independent trials");
  run->add_flag("--timestamps", timestamps, "Record start and finish times in the report");

  std::string axis;
  auto* ablate = app.add_subcommand("ablate", "Run the ablation configured under 'ablation'");
  add_common(ablate);
  ablate->add_option("--axis", axis, "budget, deletion, transfer, augmentation or distance");

  std::string report_in;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Re-render the summary table of a saved report");
  report->add_option("-i,--input", report_in, "report.json written by run")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out", report_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return detail::cmd_gen_data(common, out);
    if (train_cmd->parsed()) return detail::cmd_train(common, poisons_path, trial, out);
    if (brew_p->parsed()) return detail::cmd_brew(common, true, model_path, trial, out);
    if (brew_c->parsed()) return detail::cmd_brew(common, false, model_path, trial, out);
    if (run->parsed()) return detail::cmd_run(common, trials, threads, timestamps, out);
    if (ablate->parsed()) return detail::cmd_ablate(common, axis, out);
    if (report->parsed()) return detail::cmd_report(report_in, report_out, out);
  } catch (const Error& e) {
    err << "camobrew: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "camobrew: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace camobrew

#endif  // CAMOBREW_CLI_HPP
