#ifndef CAMOBREW_IO_ARTIFACTS_HPP
#define CAMOBREW_IO_ARTIFACTS_HPP

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camobrew/attack.hpp"
#include "camobrew/error.hpp"
#include "camobrew/io/datasets.hpp"
#include "camobrew/io/files.hpp"
#include "camobrew/model.hpp"
#include "json.hpp"

namespace camobrew::io {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kPertMagic = "CAMOBREW-PERT v1";
inline constexpr std::string_view kModelMagic = "CAMOBREW-MODEL v1";

struct PerturbationMeta {
  std::string dataset_hash;
  std::string model_id;
  std::string brew_digest;
  std::string role;
};

inline std::string brew_digest(const BrewConfig& c) {
  const json j = {{"restarts", c.restarts}, {"steps", c.steps},       {"adam_lr", c.adam_lr},
                  {"beta1", c.adam_beta1},  {"beta2", c.adam_beta2}, {"adam_eps", c.adam_eps},
                  {"quantize", c.quantize}, {"seed", c.seed}};
  return hash_hex(fnv1a(j.dump()));
}

namespace detail {

inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = nl + 1;
  }
  return out;
}

inline json parse_json_line(std::string_view line, const std::string& where) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, where + ": malformed metadata: " + e.what());
  }
}

template <typename T>
T meta_get(const json& j, const char* key, const std::string& where) {
  require(j.is_object() && j.contains(key), ErrorKind::parse, where + ": metadata lacks '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::parse, where + ": metadata field '" + key + "' has the wrong type");
  }
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline std::string format_perturbations(const PerturbationSet& set, const PerturbationMeta& meta) {
  const std::size_t dim = set.entries.empty() ? 0 : set.entries.front().delta.size();
  json m = {{"dataset_hash", meta.dataset_hash},
            {"epsilon", set.epsilon},
            {"model", meta.model_id},
            {"brew", meta.brew_digest},
            {"role", meta.role},
            {"quantized", set.quantized},
            {"phi_final", detail::optional_number(set.phi_final)},
            {"phi_quantized", detail::optional_number(set.phi_quantized)},
            {"dim", dim},
            {"count", set.entries.size()}};
  std::string out(kPertMagic);
  out += "\n" + m.dump() + "\n";
  char buf[32];
  for (const auto& e : set.entries) {
    out += std::to_string(e.example_id);
    for (float v : e.delta) {
      if (set.quantized)
        std::snprintf(buf, sizeof buf, ",%lld", static_cast<long long>(std::llround(v)));
      else
        std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

struct LoadedPerturbations {
  PerturbationSet set;
  PerturbationMeta meta;
};

/// With `expected_hash`, a file brewed for a different dataset is refused.
inline LoadedPerturbations parse_perturbations(std::string_view text, const std::string& source,
                                               const std::optional<std::string>& expected_hash = std::nullopt) {
  const auto lines = detail::lines_of(text);
  require(!lines.empty() && lines[0] == kPertMagic, ErrorKind::parse,
          source + ": not a perturbation file or unsupported version (expected '" + std::string(kPertMagic) + "')");
  require(lines.size() >= 2, ErrorKind::parse, source + ": missing metadata line");
  const json m = detail::parse_json_line(lines[1], source);
  LoadedPerturbations out;
  out.meta.dataset_hash = detail::meta_get<std::string>(m, "dataset_hash", source);
  out.meta.model_id = detail::meta_get<std::string>(m, "model", source);
  out.meta.brew_digest = detail::meta_get<std::string>(m, "brew", source);
  out.meta.role = detail::meta_get<std::string>(m, "role", source);
  if (expected_hash)
    require(out.meta.dataset_hash == *expected_hash, ErrorKind::mismatch,
            source + ": brewed for dataset " + out.meta.dataset_hash + ", not " + *expected_hash);
  out.set.epsilon = detail::meta_get<double>(m, "epsilon", source);
  out.set.quantized = detail::meta_get<bool>(m, "quantized", source);
  if (!m.at("phi_final").is_null()) out.set.phi_final = detail::meta_get<double>(m, "phi_final", source);
  if (m.contains("phi_quantized") && !m.at("phi_quantized").is_null())
    out.set.phi_quantized = detail::meta_get<double>(m, "phi_quantized", source);
  const auto dim = detail::meta_get<std::size_t>(m, "dim", source);
  const auto count = detail::meta_get<std::size_t>(m, "count", source);

  std::size_t ln = 2;
  for (; ln < lines.size() && !lines[ln].empty(); ++ln) {
    const std::string where = source + " line " + std::to_string(ln + 1);
    const auto fields = io::detail::split_csv_line(lines[ln]);
    require(fields.size() == dim + 1, ErrorKind::parse,
            where + ": expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()));
    PerturbationEntry e{io::detail::parse_number<std::int64_t>(fields[0], where), std::vector<float>(dim)};
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = io::detail::parse_number<double>(fields[j + 1], where);
      require(std::isfinite(v), ErrorKind::parse, where + ": non-finite delta");
      e.delta[j] = static_cast<float>(v);
    }
    out.set.entries.push_back(std::move(e));
  }
  for (; ln < lines.size(); ++ln)
    require(lines[ln].empty(), ErrorKind::parse, source + " line " + std::to_string(ln + 1) + ": data after blank line");
  require(out.set.entries.size() == count, ErrorKind::parse,
          source + ": header announces " + std::to_string(count) + " entries, found " +
              std::to_string(out.set.entries.size()));
  return out;
}

inline void save_perturbations(const PerturbationSet& set, const PerturbationMeta& meta, const fs::path& path) {
  write_atomic(path, format_perturbations(set, meta));
}

inline LoadedPerturbations load_perturbations(const fs::path& path,
                                              const std::optional<std::string>& expected_hash = std::nullopt) {
  return parse_perturbations(read_file(path), path.string(), expected_hash);
}

inline json spec_to_json(const ModelSpec& s) {
  return {{"family", to_string(s.family)},
          {"input_dim", s.input_dim},
          {"num_classes", s.num_classes},
          {"hidden_width", s.hidden_width},
          {"activation", to_string(s.activation)},
          {"preprocessing", to_string(s.preprocessing)}};
}

inline Family parse_family(const std::string& s) {
  for (Family f : {Family::linear_binary_linear_loss, Family::linear_binary_hinge,
                   Family::linear_softmax_crossentropy, Family::mlp1_softmax_crossentropy})
    if (s == to_string(f)) return f;
  throw Error(ErrorKind::config, "unknown model family '" + s + "'");
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw Error(ErrorKind::config, "unknown activation '" + s + "'");
}

inline Preprocessing parse_preprocessing(const std::string& s) {
  for (Preprocessing p : {Preprocessing::none, Preprocessing::l2_normalize, Preprocessing::unit_scale})
    if (s == to_string(p)) return p;
  throw Error(ErrorKind::config, "unknown preprocessing '" + s + "'");
}

inline ModelSpec spec_from_json(const json& j, const std::string& where) {
  ModelSpec s;
  try {
    s.family = parse_family(j.at("family").get<std::string>());
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<int>();
    s.hidden_width = j.at("hidden_width").get<std::size_t>();
    s.activation = parse_activation(j.at("activation").get<std::string>());
    s.preprocessing = parse_preprocessing(j.at("preprocessing").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, where + ": bad model spec: " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, where + ": " + e.what());
  }
  return s;
}

/// Magic line, spec line, parameter count line, then one hexfloat per line.
inline std::string format_model(const ModelParams& p) {
  std::string out(kModelMagic);
  out += "\n" + spec_to_json(p.spec).dump() + "\n";
  out += "params " + std::to_string(p.theta.size()) + "\n";
  char buf[40];
  for (double v : p.theta) {
    std::snprintf(buf, sizeof buf, "%a\n", v);
    out += buf;
  }
  return out;
}

inline ModelParams parse_model(std::string_view text, const std::string& source) {
  const auto lines = detail::lines_of(text);
  require(!lines.empty() && lines[0] == kModelMagic, ErrorKind::parse,
          source + ": not a model file or unsupported version");
  require(lines.size() >= 3, ErrorKind::parse, source + ": truncated header");
  ModelParams p;
  p.spec = spec_from_json(detail::parse_json_line(lines[1], source), source);
  try {
    p.spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, source + ": " + e.what());
  }
  require(lines[2].substr(0, 7) == "params ", ErrorKind::parse, source + ": missing parameter count");
  const auto n = io::detail::parse_number<std::size_t>(lines[2].substr(7), source + " line 3");
  require(n > 0, ErrorKind::parse, source + ": zero parameters");
  require(n == p.spec.param_count(), ErrorKind::parse,
          source + ": " + std::to_string(n) + " parameters, spec needs " + std::to_string(p.spec.param_count()));
  require(lines.size() >= 3 + n, ErrorKind::parse, source + ": truncated parameter payload");
  p.theta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string field(lines[3 + i]);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    require(!field.empty() && end == field.c_str() + field.size() && std::isfinite(v), ErrorKind::parse,
            source + " line " + std::to_string(4 + i) + ": bad parameter '" + field + "'");
    p.theta[i] = v;
  }
  for (std::size_t i = 3 + n; i < lines.size(); ++i)
    require(lines[i].empty(), ErrorKind::parse, source + ": trailing data after parameters");
  return p;
}

inline void save_model(const ModelParams& p, const fs::path& path) { write_atomic(path, format_model(p)); }

/// With `expected`, a model whose spec differs is refused.
inline ModelParams load_model(const fs::path& path, const std::optional<ModelSpec>& expected = std::nullopt) {
  ModelParams p = parse_model(read_file(path), path.string());
  if (expected)
    require(p.spec == *expected, ErrorKind::mismatch,
            path.string() + ": model " + p.spec.id() + " does not match the scenario's " + expected->id());
  return p;
}

}  // namespace camobrew::io

#endif  // CAMOBREW_IO_ARTIFACTS_HPP
