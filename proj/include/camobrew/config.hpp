#ifndef CAMOBREW_CONFIG_HPP
#define CAMOBREW_CONFIG_HPP

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "camobrew/error.hpp"
#include "camobrew/io/artifacts.hpp"
#include "camobrew/io/datasets.hpp"
#include "camobrew/pipeline.hpp"
#include "json.hpp"

namespace camobrew {

using json = nlohmann::ordered_json;

enum class DatasetKind { synthetic_blobs, cifar10_binary, csv };

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::synthetic_blobs: return "synthetic-blobs";
    case DatasetKind::cifar10_binary: return "cifar10-binary";
    case DatasetKind::csv: return "csv";
  }
  return "?";
}

inline const char* to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

struct DatasetSource {
  DatasetKind kind = DatasetKind::synthetic_blobs;
  io::BlobsConfig blobs;
  std::string dir;
  std::size_t records_per_file = io::kCifarBatchRecords;
  std::string train_path;
  std::string validation_path;
  std::optional<int> num_classes;
  bool binary = false;
  Preprocessing preprocessing = Preprocessing::none;
  std::optional<double> range_lo;
  std::optional<double> range_hi;
};

struct ModelChoice {
  Family family = Family::mlp1_softmax_crossentropy;
  std::size_t hidden_width = 32;
  Activation activation = Activation::tanh;
  TrainConfig train;
};

enum class AblationAxis { budget, deletion, transfer, augmentation, distance };

inline const char* to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::budget: return "budget";
    case AblationAxis::deletion: return "deletion";
    case AblationAxis::transfer: return "transfer";
    case AblationAxis::augmentation: return "augmentation";
    case AblationAxis::distance: return "distance";
  }
  return "?";
}

struct AblationConfig {
  AblationAxis axis = AblationAxis::budget;
  std::vector<std::pair<double, double>> budgets;
  std::vector<std::pair<double, double>> deletions;
  std::vector<ModelChoice> brew_models;
  std::vector<ModelChoice> victim_models;
  std::vector<AugmentPolicy> augmentations;
  double ks_threshold = 0.25;
  std::size_t bins = 20;
  int trial = 0;
};

/// Everything a config file can say. Input dimension, class count and
/// preprocessing of the models come from the dataset section.
struct RunConfig {
  DatasetSource dataset;
  ModelChoice victim;
  std::optional<ModelChoice> attacker;
  ThreatModel threat;
  BrewConfig brew;
  CamouflageMethod camouflage = CamouflageMethod::gradient_matching;
  RetrainSeed retrain_seed = RetrainSeed::fresh;
  int trials = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool include_timings = false;
  AblationConfig ablation;
};

namespace detail {

/// Reads one JSON object and rejects any key that was never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), ErrorKind::config, where() + " must be an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::config, where(key) + " has the wrong type");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  std::string text(const char* key, std::string fallback) {
    get(key, fallback);
    return fallback;
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key = "") const { return key.empty() ? path_ : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      require(seen_.count(item.key()) > 0, ErrorKind::config, "unknown config key '" + where(item.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& text, std::initializer_list<E> options, const std::string& where) {
  std::string names;
  for (E e : options) {
    if (text == to_string(e)) return e;
    names += names.empty() ? "" : ", ";
    names += to_string(e);
  }
  throw Error(ErrorKind::config, where + ": '" + text + "' is not one of " + names);
}

inline TrainConfig read_train(Section s) {
  TrainConfig t;
  const std::string opt = s.text("optimizer", "full-batch");
  if (opt == "full-batch") {
    FullBatchOptions g;
    s.get("lr", g.lr);
    s.get("steps", g.steps);
    s.get("weight_decay", g.weight_decay);
    s.get("tol", g.tol);
    g.reduction = parse_enum(s.text("reduction", "mean"), {Reduction::mean, Reduction::sum}, s.where("reduction"));
    t.optimizer = g;
  } else if (opt == "sgd") {
    SgdOptions g;
    s.get("lr", g.lr);
    s.get("epochs", g.epochs);
    s.get("weight_decay", g.weight_decay);
    s.get("momentum", g.momentum);
    s.get("batch_size", g.batch_size);
    s.get("shuffle", g.shuffle_each_epoch);
    t.optimizer = g;
  } else {
    throw Error(ErrorKind::config, s.where("optimizer") + ": '" + opt + "' is not one of full-batch, sgd");
  }
  s.get("seed", t.seed);
  t.augmentation = parse_enum(s.text("augmentation", "none"), {AugmentPolicy::none, AugmentPolicy::hflip},
                              s.where("augmentation"));
  s.finish();
  return t;
}

inline ModelChoice read_model(Section s) {
  ModelChoice m;
  try {
    m.family = io::parse_family(s.text("family", to_string(m.family)));
    m.activation = io::parse_activation(s.text("activation", to_string(m.activation)));
  } catch (const Error& e) {
    throw Error(ErrorKind::config, s.where() + ": " + e.what());
  }
  s.get("hidden_width", m.hidden_width);
  if (s.has("train")) m.train = read_train(s.child("train"));
  s.finish();
  return m;
}

inline std::vector<std::pair<double, double>> read_pairs(const json& j, const std::string& where) {
  std::vector<std::pair<double, double>> out;
  require(j.is_array(), ErrorKind::config, where + " must be a list of [a, b] pairs");
  for (const auto& p : j) {
    require(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(), ErrorKind::config,
            where + " must be a list of [a, b] pairs");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

inline DatasetSource read_dataset(Section s) {
  DatasetSource d;
  d.kind = parse_enum(s.text("kind", to_string(d.kind)),
                      {DatasetKind::synthetic_blobs, DatasetKind::cifar10_binary, DatasetKind::csv}, s.where("kind"));
  s.get("dim", d.blobs.dim);
  s.get("classes", d.blobs.classes);
  s.get("train_per_class", d.blobs.train_per_class);
  s.get("validation_per_class", d.blobs.validation_per_class);
  s.get("spread", d.blobs.spread);
  s.get("separation", d.blobs.separation);
  s.get("seed", d.blobs.seed);
  s.get("dir", d.dir);
  s.get("records_per_file", d.records_per_file);
  s.get("train_path", d.train_path);
  s.get("validation_path", d.validation_path);
  s.get("num_classes", d.num_classes);
  s.get("binary", d.binary);
  try {
    d.preprocessing = io::parse_preprocessing(s.text("preprocessing", to_string(d.preprocessing)));
  } catch (const Error& e) {
    throw Error(ErrorKind::config, s.where() + ": " + e.what());
  }
  s.get("range_lo", d.range_lo);
  s.get("range_hi", d.range_hi);
  s.finish();
  return d;
}

}  // namespace detail

/// Applies "a.b.c=value" to a raw config document. The value is read as
/// JSON when it parses and as a plain string otherwise.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::config, "override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), ErrorKind::config, "override path '" + path + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline RunConfig read_config(const json& doc) {
  detail::Section s(doc, "config");
  RunConfig c;
  if (s.has("dataset")) c.dataset = detail::read_dataset(s.child("dataset"));
  if (s.has("model")) c.victim = detail::read_model(s.child("model"));
  if (s.has("attacker_model")) c.attacker = detail::read_model(s.child("attacker_model"));
  if (s.has("threat")) {
    auto t = s.child("threat");
    t.get("epsilon", c.threat.epsilon);
    t.get("poison_budget", c.threat.b_p);
    t.get("camouflage_budget", c.threat.b_c);
    t.finish();
  }
  if (s.has("brew")) {
    auto b = s.child("brew");
    if (b.text("preset", "default") == "svm") c.brew = BrewConfig::svm_preset();
    b.get("restarts", c.brew.restarts);
    b.get("steps", c.brew.steps);
    b.get("lr", c.brew.adam_lr);
    b.get("beta1", c.brew.adam_beta1);
    b.get("beta2", c.brew.adam_beta2);
    b.get("adam_eps", c.brew.adam_eps);
    b.get("quantize", c.brew.quantize);
    b.get("seed", c.brew.seed);
    b.finish();
  }
  c.camouflage = detail::parse_enum(s.text("camouflage", to_string(c.camouflage)),
                                    {CamouflageMethod::gradient_matching, CamouflageMethod::label_flip},
                                    s.where("camouflage"));
  c.retrain_seed = detail::parse_enum(s.text("retrain_seed", to_string(c.retrain_seed)),
                                      {RetrainSeed::fresh, RetrainSeed::reuse}, s.where("retrain_seed"));
  s.get("trials", c.trials);
  s.get("seed", c.seed);
  s.get("threads", c.threads);
  s.get("include_timings", c.include_timings);
  if (s.has("ablation")) {
    auto a = s.child("ablation");
    auto& ab = c.ablation;
    ab.axis = detail::parse_enum(a.text("axis", to_string(ab.axis)),
                                 {AblationAxis::budget, AblationAxis::deletion, AblationAxis::transfer,
                                  AblationAxis::augmentation, AblationAxis::distance},
                                 a.where("axis"));
    if (a.has("budgets")) ab.budgets = detail::read_pairs(a.raw("budgets"), a.where("budgets"));
    if (a.has("deletions")) ab.deletions = detail::read_pairs(a.raw("deletions"), a.where("deletions"));
    for (const char* key : {"brew_models", "victim_models"}) {
      if (!a.has(key)) continue;
      const json& list = a.raw(key);
      require(list.is_array(), ErrorKind::config, a.where(key) + " must be a list of model sections");
      auto& into = std::string(key) == "brew_models" ? ab.brew_models : ab.victim_models;
      for (std::size_t i = 0; i < list.size(); ++i)
        into.push_back(detail::read_model(detail::Section(list[i], a.where(key) + "[" + std::to_string(i) + "]")));
    }
    if (a.has("augmentations")) {
      const json& list = a.raw("augmentations");
      require(list.is_array(), ErrorKind::config, a.where("augmentations") + " must be a list");
      for (const auto& p : list) {
        require(p.is_string(), ErrorKind::config, a.where("augmentations") + " must list policy names");
        ab.augmentations.push_back(detail::parse_enum(p.get<std::string>(), {AugmentPolicy::none, AugmentPolicy::hflip},
                                                      a.where("augmentations")));
      }
    }
    a.get("ks_threshold", ab.ks_threshold);
    a.get("bins", ab.bins);
    a.get("trial", ab.trial);
    a.finish();
  }
  s.finish();
  return c;
}

inline json to_json(const TrainConfig& t) {
  json j;
  if (const auto* g = std::get_if<FullBatchOptions>(&t.optimizer)) {
    j = {{"optimizer", "full-batch"}, {"lr", g->lr},   {"steps", g->steps}, {"weight_decay", g->weight_decay},
         {"tol", g->tol},            {"reduction", to_string(g->reduction)}};
  } else {
    const auto& s = std::get<SgdOptions>(t.optimizer);
    j = {{"optimizer", "sgd"},         {"lr", s.lr},          {"epochs", s.epochs}, {"weight_decay", s.weight_decay},
         {"momentum", s.momentum},     {"batch_size", s.batch_size}, {"shuffle", s.shuffle_each_epoch}};
  }
  j["seed"] = t.seed;
  j["augmentation"] = to_string(t.augmentation);
  return j;
}

inline json to_json(const ModelChoice& m) {
  return {{"family", to_string(m.family)},
          {"hidden_width", m.hidden_width},
          {"activation", to_string(m.activation)},
          {"train", to_json(m.train)}};
}

/// Canonical form with every default spelled out; reading it back gives the
/// same config. The thread count is left out since it never changes results.
inline json to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  json ds = {{"kind", to_string(d.kind)}};
  if (d.kind == DatasetKind::synthetic_blobs) {
    ds["dim"] = d.blobs.dim;
    ds["classes"] = d.blobs.classes;
    ds["train_per_class"] = d.blobs.train_per_class;
    ds["validation_per_class"] = d.blobs.validation_per_class;
    ds["spread"] = d.blobs.spread;
    ds["separation"] = d.blobs.separation;
    ds["seed"] = d.blobs.seed;
  } else if (d.kind == DatasetKind::cifar10_binary) {
    ds["dir"] = d.dir;
    ds["records_per_file"] = d.records_per_file;
  } else {
    ds["train_path"] = d.train_path;
    ds["validation_path"] = d.validation_path;
    ds["num_classes"] = d.num_classes ? json(*d.num_classes) : json(nullptr);
  }
  ds["binary"] = d.binary;
  ds["preprocessing"] = to_string(d.preprocessing);
  ds["range_lo"] = d.range_lo ? json(*d.range_lo) : json(nullptr);
  ds["range_hi"] = d.range_hi ? json(*d.range_hi) : json(nullptr);

  json j;
  j["dataset"] = ds;
  j["model"] = to_json(c.victim);
  j["attacker_model"] = c.attacker ? to_json(*c.attacker) : json(nullptr);
  j["threat"] = {{"epsilon", c.threat.epsilon},
                 {"poison_budget", c.threat.b_p},
                 {"camouflage_budget", c.threat.b_c}};
  j["brew"] = {{"restarts", c.brew.restarts}, {"steps", c.brew.steps},       {"lr", c.brew.adam_lr},
               {"beta1", c.brew.adam_beta1},  {"beta2", c.brew.adam_beta2}, {"adam_eps", c.brew.adam_eps},
               {"quantize", c.brew.quantize}, {"seed", c.brew.seed}};
  j["camouflage"] = to_string(c.camouflage);
  j["retrain_seed"] = to_string(c.retrain_seed);
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["include_timings"] = c.include_timings;
  const auto& a = c.ablation;
  json ab = {{"axis", to_string(a.axis)}};
  const auto pairs = [](const auto& v) {
    json out = json::array();
    for (const auto& [x, y] : v) out.push_back({x, y});
    return out;
  };
  ab["budgets"] = pairs(a.budgets);
  ab["deletions"] = pairs(a.deletions);
  ab["brew_models"] = json::array();
  for (const auto& m : a.brew_models) ab["brew_models"].push_back(to_json(m));
  ab["victim_models"] = json::array();
  for (const auto& m : a.victim_models) ab["victim_models"].push_back(to_json(m));
  ab["augmentations"] = json::array();
  for (auto p : a.augmentations) ab["augmentations"].push_back(to_string(p));
  ab["ks_threshold"] = a.ks_threshold;
  ab["bins"] = a.bins;
  ab["trial"] = a.trial;
  j["ablation"] = ab;
  return j;
}

inline json parse_config_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, source + ": malformed config: " + e.what());
  }
}

inline RunConfig load_config(const io::fs::path& path, const std::vector<std::string>& overrides = {}) {
  json doc = parse_config_text(io::read_file(path), path.string());
  for (const auto& o : overrides) apply_override(doc, o);
  return read_config(doc);
}

/// Loads and prepares both splits: binary reduction, preprocessing tag and
/// feature range applied to each.
inline io::Splits load_splits(const DatasetSource& d) {
  io::Splits s;
  switch (d.kind) {
    case DatasetKind::synthetic_blobs: s = io::synth_blobs(d.blobs); break;
    case DatasetKind::cifar10_binary:
      require(!d.dir.empty(), ErrorKind::config, "cifar10-binary dataset needs 'dir'");
      s = io::load_cifar10_binary(d.dir, d.records_per_file);
      break;
    case DatasetKind::csv: {
      require(!d.train_path.empty() && !d.validation_path.empty(), ErrorKind::config,
              "csv dataset needs 'train_path' and 'validation_path'");
      io::CsvOptions opt;
      opt.num_classes = d.num_classes;
      Dataset train = io::load_csv_dataset(d.train_path, opt);
      if (!opt.num_classes) opt.num_classes = train.num_classes();
      opt.first_id = static_cast<std::int64_t>(train.size());
      s = {std::move(train), io::load_csv_dataset(d.validation_path, opt)};
      break;
    }
  }
  if (d.binary) {
    s.train = io::to_binary_cifar(s.train);
    s.validation = io::to_binary_cifar(s.validation);
  }
  for (Dataset* ds : {&s.train, &s.validation}) {
    ds->preprocessing = d.preprocessing;
    if (d.range_lo) ds->feature_range.lo = *d.range_lo;
    if (d.range_hi) ds->feature_range.hi = *d.range_hi;
  }
  return s;
}

inline ModelSetup model_setup(const ModelChoice& m, const Dataset& data) {
  ModelSetup out;
  out.spec.family = m.family;
  out.spec.input_dim = data.dim();
  out.spec.num_classes = data.num_classes();
  out.spec.hidden_width = m.family == Family::mlp1_softmax_crossentropy ? m.hidden_width : 0;
  out.spec.activation = m.activation;
  out.spec.preprocessing = data.preprocessing;
  out.train = m.train;
  return out;
}

inline Scenario build_scenario(const RunConfig& c, std::shared_ptr<const Dataset> train,
                               std::shared_ptr<const Dataset> validation) {
  Scenario sc;
  sc.victim = model_setup(c.victim, *train);
  if (c.attacker) sc.attacker = model_setup(*c.attacker, *train);
  sc.train = std::move(train);
  sc.validation = std::move(validation);
  sc.threat = c.threat;
  sc.brew = c.brew;
  sc.camouflage = c.camouflage;
  sc.retrain_seed = c.retrain_seed;
  sc.num_trials = c.trials;
  sc.seed = c.seed;
  sc.validate();
  return sc;
}

inline Scenario build_scenario(const RunConfig& c, io::Splits splits) {
  return build_scenario(c, std::make_shared<const Dataset>(std::move(splits.train)),
                        std::make_shared<const Dataset>(std::move(splits.validation)));
}

}  // namespace camobrew

#endif  // CAMOBREW_CONFIG_HPP
