#ifndef CAMOBREW_REPORT_HPP
#define CAMOBREW_REPORT_HPP

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "camobrew/config.hpp"
#include "camobrew/io/files.hpp"
#include "camobrew/pipeline.hpp"
#include "json.hpp"

#ifndef CAMOBREW_VERSION
#define CAMOBREW_VERSION "0.0.0"
#endif

namespace camobrew {

struct RunReport {
  json scenario;
  std::string software = std::string("camobrew ") + CAMOBREW_VERSION;
  std::string dataset_hash;
  std::string validation_hash;
  std::vector<TrialResult> trials;
  Summary summary;
  /// Only written when requested, so reports stay byte-identical by default.
  std::optional<std::string> started_at;
  std::optional<std::string> finished_at;
  bool include_timings = false;
};

namespace detail {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

inline json stat_json(const std::optional<Stat>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"std", s->std}, {"n", s->n}, {"std_defined", s->std_defined}};
}

inline std::optional<Stat> stat_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  Stat s;
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
  s.n = j.at("n").get<std::size_t>();
  s.std_defined = j.at("std_defined").get<bool>();
  return s;
}

}  // namespace detail

inline json to_json(const TrialResult& r, bool include_timings = false) {
  json plan = {{"trial", r.plan.trial},           {"seed", r.plan.seed},
               {"target_id", r.plan.target_id},   {"y_target", r.plan.y_target},
               {"y_adversarial", r.plan.y_adversarial}, {"poison_ids", r.plan.poison_ids},
               {"camouflage_ids", r.plan.camouflage_ids}};
  json j = {{"plan", plan},
            {"failure", detail::opt(r.failure)},
            {"failure_stage", detail::opt(r.failure_stage)},
            {"poison_success", r.poison_success},
            {"camo_success", detail::opt(r.camo_success)},
            {"unlearn_success", detail::opt(r.unlearn_success)},
            {"joint_success", r.joint_success},
            {"camo_applicable", r.camo_applicable},
            {"stage2_consistent", detail::opt(r.stage2_consistent)},
            {"val_acc_clean", detail::opt(r.val_acc_clean)},
            {"val_acc_poisoned", detail::opt(r.val_acc_poisoned)},
            {"val_acc_camouflaged", detail::opt(r.val_acc_camouflaged)},
            {"val_acc_unlearned", detail::opt(r.val_acc_unlearned)},
            {"phi_poison", detail::opt(r.phi_poison)},
            {"phi_poison_quantized", detail::opt(r.phi_poison_quantized)},
            {"phi_camo", detail::opt(r.phi_camo)},
            {"phi_camo_quantized", detail::opt(r.phi_camo_quantized)},
            {"pred_clean", detail::opt(r.pred_clean)},
            {"pred_poisoned", detail::opt(r.pred_poisoned)},
            {"pred_camouflaged", detail::opt(r.pred_camouflaged)},
            {"pred_unlearned", detail::opt(r.pred_unlearned)},
            {"poisons_used", r.poisons_used},
            {"camouflages_used", r.camouflages_used}};
  if (include_timings) j["seconds"] = r.seconds;
  return j;
}

inline TrialResult trial_from_json(const json& j) {
  TrialResult r;
  const json& p = j.at("plan");
  r.plan.trial = p.at("trial").get<int>();
  r.plan.seed = p.at("seed").get<std::uint64_t>();
  r.plan.target_id = p.at("target_id").get<std::int64_t>();
  r.plan.y_target = p.at("y_target").get<int>();
  r.plan.y_adversarial = p.at("y_adversarial").get<int>();
  r.plan.poison_ids = p.at("poison_ids").get<std::vector<std::int64_t>>();
  r.plan.camouflage_ids = p.at("camouflage_ids").get<std::vector<std::int64_t>>();
  using detail::get_opt;
  r.failure = get_opt<std::string>(j, "failure");
  r.failure_stage = get_opt<std::string>(j, "failure_stage");
  r.poison_success = j.at("poison_success").get<bool>();
  r.camo_success = get_opt<bool>(j, "camo_success");
  r.unlearn_success = get_opt<bool>(j, "unlearn_success");
  r.joint_success = j.at("joint_success").get<bool>();
  r.camo_applicable = j.at("camo_applicable").get<bool>();
  r.stage2_consistent = get_opt<bool>(j, "stage2_consistent");
  r.val_acc_clean = get_opt<double>(j, "val_acc_clean");
  r.val_acc_poisoned = get_opt<double>(j, "val_acc_poisoned");
  r.val_acc_camouflaged = get_opt<double>(j, "val_acc_camouflaged");
  r.val_acc_unlearned = get_opt<double>(j, "val_acc_unlearned");
  r.phi_poison = get_opt<double>(j, "phi_poison");
  r.phi_poison_quantized = get_opt<double>(j, "phi_poison_quantized");
  r.phi_camo = get_opt<double>(j, "phi_camo");
  r.phi_camo_quantized = get_opt<double>(j, "phi_camo_quantized");
  r.pred_clean = get_opt<int>(j, "pred_clean");
  r.pred_poisoned = get_opt<int>(j, "pred_poisoned");
  r.pred_camouflaged = get_opt<int>(j, "pred_camouflaged");
  r.pred_unlearned = get_opt<int>(j, "pred_unlearned");
  r.poisons_used = j.at("poisons_used").get<std::size_t>();
  r.camouflages_used = j.at("camouflages_used").get<std::size_t>();
  if (j.contains("seconds")) r.seconds = j.at("seconds").get<std::map<std::string, double>>();
  return r;
}

inline json to_json(const Summary& s) {
  return {{"trials", s.trials},
          {"failures", s.failures},
          {"poison_successes", s.poison_successes},
          {"camo_successes", s.camo_successes},
          {"camo_applicable", s.camo_applicable},
          {"joint_successes", s.joint_successes},
          {"stage2_violations", s.stage2_violations},
          {"poison_rate", s.poison_rate},
          {"camo_rate", detail::opt(s.camo_rate)},
          {"camo_rate_all", s.camo_rate_all},
          {"joint_rate", s.joint_rate},
          {"acc_clean", detail::stat_json(s.acc_clean)},
          {"acc_poisoned", detail::stat_json(s.acc_poisoned)},
          {"acc_camouflaged", detail::stat_json(s.acc_camouflaged)},
          {"acc_unlearned", detail::stat_json(s.acc_unlearned)}};
}

inline Summary summary_from_json(const json& j) {
  Summary s;
  s.trials = j.at("trials").get<std::size_t>();
  s.failures = j.at("failures").get<std::size_t>();
  s.poison_successes = j.at("poison_successes").get<std::size_t>();
  s.camo_successes = j.at("camo_successes").get<std::size_t>();
  s.camo_applicable = j.at("camo_applicable").get<std::size_t>();
  s.joint_successes = j.at("joint_successes").get<std::size_t>();
  s.stage2_violations = j.at("stage2_violations").get<std::size_t>();
  s.poison_rate = j.at("poison_rate").get<double>();
  s.camo_rate = detail::get_opt<double>(j, "camo_rate");
  s.camo_rate_all = j.at("camo_rate_all").get<double>();
  s.joint_rate = j.at("joint_rate").get<double>();
  s.acc_clean = detail::stat_from(j.at("acc_clean"));
  s.acc_poisoned = detail::stat_from(j.at("acc_poisoned"));
  s.acc_camouflaged = detail::stat_from(j.at("acc_camouflaged"));
  s.acc_unlearned = detail::stat_from(j.at("acc_unlearned"));
  return s;
}

inline json to_json(const RunReport& r) {
  json j;
  j["software"] = r.software;
  j["scenario"] = r.scenario;
  j["dataset_hash"] = r.dataset_hash;
  j["validation_hash"] = r.validation_hash;
  if (r.started_at) j["started_at"] = *r.started_at;
  if (r.finished_at) j["finished_at"] = *r.finished_at;
  j["summary"] = to_json(r.summary);
  j["trials"] = json::array();
  for (const auto& t : r.trials) j["trials"].push_back(to_json(t, r.include_timings));
  return j;
}

inline RunReport report_from_json(const json& j) {
  try {
    RunReport r;
    r.software = j.at("software").get<std::string>();
    r.scenario = j.at("scenario");
    r.dataset_hash = j.at("dataset_hash").get<std::string>();
    r.validation_hash = j.at("validation_hash").get<std::string>();
    r.started_at = detail::get_opt<std::string>(j, "started_at");
    r.finished_at = detail::get_opt<std::string>(j, "finished_at");
    r.summary = summary_from_json(j.at("summary"));
    for (const auto& t : j.at("trials")) {
      r.trials.push_back(trial_from_json(t));
      r.include_timings |= t.contains("seconds");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed report: ") + e.what());
  }
}

inline RunReport make_report(const RunConfig& cfg, const Scenario& sc, const RunResult& run) {
  RunReport r;
  r.scenario = to_json(cfg);
  r.dataset_hash = hash_hex(content_hash(*sc.train));
  r.validation_hash = hash_hex(content_hash(*sc.validation));
  r.trials = run.trials;
  r.summary = run.summary;
  r.include_timings = cfg.include_timings;
  return r;
}

/// "GM (16, 0.2%, 0.4%)"
inline std::string attack_label(CamouflageMethod m, const ThreatModel& t) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s (%g, %g%%, %g%%)", m == CamouflageMethod::label_flip ? "LF" : "GM", t.epsilon,
                t.b_p, t.b_c);
  return buf;
}

namespace detail {
inline std::string pct(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}
}  // namespace detail

inline std::string table_header() {
  return "attack,trials,poisoning_rate,camouflaging_rate,clean_acc_mean,clean_acc_std,poisoned_acc_mean,"
         "poisoned_acc_std,camouflaged_acc_mean,camouflaged_acc_std\n";
}

/// One summary row; rates and accuracies in percent.
inline std::string table_row(const std::string& attack, const Summary& s) {
  const auto mean = [](const std::optional<Stat>& st) { return st ? std::optional(st->mean) : std::nullopt; };
  const auto sd = [](const std::optional<Stat>& st) { return st ? std::optional(st->std) : std::nullopt; };
  std::string row = detail::csv_field(attack) + "," + std::to_string(s.trials) + ",";
  row += detail::pct(s.poison_rate) + "," + detail::pct(s.camo_rate) + ",";
  row += detail::pct(mean(s.acc_clean)) + "," + detail::pct(sd(s.acc_clean)) + ",";
  row += detail::pct(mean(s.acc_poisoned)) + "," + detail::pct(sd(s.acc_poisoned)) + ",";
  row += detail::pct(mean(s.acc_camouflaged)) + "," + detail::pct(sd(s.acc_camouflaged)) + "\n";
  return row;
}

inline std::string summary_csv(const RunReport& r) {
  require(!r.trials.empty(), ErrorKind::precondition, "report has no trials");
  std::string attack = r.scenario.contains("camouflage") ? r.scenario.at("camouflage").get<std::string>() : "";
  if (r.scenario.contains("threat")) {
    const auto& t = r.scenario.at("threat");
    const ThreatModel tm{t.at("epsilon").get<double>(), t.at("poison_budget").get<double>(),
                         t.at("camouflage_budget").get<double>()};
    attack = attack_label(attack == "label-flip" ? CamouflageMethod::label_flip : CamouflageMethod::gradient_matching, tm);
  }
  return table_header() + table_row(attack, r.summary);
}

inline std::string report_text(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

/// Writes report.json and summary.csv under `dir`.
inline void emit_report(const RunReport& r, const io::fs::path& dir) {
  require(!r.trials.empty(), ErrorKind::precondition, "refusing to emit a report without trials");
  io::write_atomic(dir / "report.json", report_text(r));
  io::write_atomic(dir / "summary.csv", summary_csv(r));
}

inline RunReport load_report(const io::fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace camobrew

#endif  // CAMOBREW_REPORT_HPP
