#ifndef CAMOBREW_IO_DATASETS_HPP
#define CAMOBREW_IO_DATASETS_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/io/files.hpp"
#include "camobrew/rng.hpp"

namespace camobrew::io {

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;
inline constexpr std::size_t kCifarBatchRecords = 10000;

inline const std::vector<std::string>& cifar10_class_names() {
  static const std::vector<std::string> names = {"airplane", "automobile", "bird",  "cat",  "deer",
                                                 "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

inline Dataset empty_cifar10() {
  Dataset d(kCifarPixels, 10);
  d.feature_range = FeatureRange::pixels();
  d.image_shape = ImageShape{3, 32, 32};
  d.class_names = cifar10_class_names();
  return d;
}

/// Appends every record of a CIFAR-10 binary buffer: one label byte then
/// 1024 red, 1024 green and 1024 blue bytes, each plane row-major.
inline void append_cifar10_records(Dataset& out, std::string_view bytes, std::int64_t first_id,
                                   const std::string& source) {
  require(bytes.size() % kCifarRecord == 0, ErrorKind::parse,
          source + ": size " + std::to_string(bytes.size()) + " bytes is not a multiple of the " +
              std::to_string(kCifarRecord) + "-byte record");
  const std::size_t n = bytes.size() / kCifarRecord;
  out.reserve(out.size() + n);
  std::vector<float> pixels(kCifarPixels);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t offset = i * kCifarRecord;
    const auto label = static_cast<unsigned char>(bytes[offset]);
    require(label <= 9, ErrorKind::parse,
            source + ": label byte " + std::to_string(label) + " at offset " + std::to_string(offset) + " exceeds 9");
    for (std::size_t j = 0; j < kCifarPixels; ++j)
      pixels[j] = static_cast<float>(static_cast<unsigned char>(bytes[offset + 1 + j]));
    out.add<float>(first_id + static_cast<std::int64_t>(i), pixels, label);
  }
}

/// A single batch file. With `expected_records`, the file must hold exactly that many.
inline Dataset load_cifar10_batch(const fs::path& path, std::optional<std::size_t> expected_records = std::nullopt,
                                  std::int64_t first_id = 0) {
  const std::string bytes = read_file(path);
  if (expected_records)
    require(bytes.size() == *expected_records * kCifarRecord, ErrorKind::parse,
            path.string() + ": expected " + std::to_string(*expected_records * kCifarRecord) + " bytes, found " +
                std::to_string(bytes.size()));
  Dataset d = empty_cifar10();
  append_cifar10_records(d, bytes, first_id, path.string());
  return d;
}

struct Splits {
  Dataset train;
  Dataset validation;
};

/// data_batch_1..5.bin as the training split and test_batch.bin as the
/// validation split. Training ids count from 0, test ids continue after them.
inline Splits load_cifar10_binary(const fs::path& dir, std::size_t records_per_file = kCifarBatchRecords) {
  Splits s{empty_cifar10(), empty_cifar10()};
  const auto load = [&](Dataset& into, const std::string& name, std::int64_t first_id) {
    const fs::path path = dir / name;
    require(fs::exists(path), ErrorKind::io, "missing CIFAR-10 batch file " + path.string());
    const std::string bytes = read_file(path);
    require(bytes.size() == records_per_file * kCifarRecord, ErrorKind::parse,
            path.string() + ": expected " + std::to_string(records_per_file * kCifarRecord) + " bytes, found " +
                std::to_string(bytes.size()));
    append_cifar10_records(into, bytes, first_id, path.string());
  };
  for (int b = 1; b <= 5; ++b)
    load(s.train, "data_batch_" + std::to_string(b) + ".bin", static_cast<std::int64_t>(s.train.size()));
  load(s.validation, "test_batch.bin", static_cast<std::int64_t>(s.train.size()));
  return s;
}

/// Animal classes (bird, cat, deer, dog, frog, horse) become class 1,
/// machines class 0.
inline Dataset to_binary_cifar(const Dataset& d) {
  require(d.num_classes() == 10, ErrorKind::precondition, "binary reduction expects 10 CIFAR classes");
  Dataset out(d.dim(), 2);
  out.reserve(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    const int l = d.label(r);
    require(l >= 0 && l <= 9, ErrorKind::precondition, "unknown CIFAR label " + std::to_string(l));
    out.add<float>(d.id(r), d.features(r), (l >= 2 && l <= 7) ? 1 : 0, d.role(r));
  }
  out.preprocessing = d.preprocessing;
  out.feature_range = d.feature_range;
  out.image_shape = d.image_shape;
  out.class_names = {"machine", "animal"};
  return out;
}

struct BlobsConfig {
  std::size_t dim = 20;
  int classes = 4;
  std::size_t train_per_class = 100;
  std::size_t validation_per_class = 50;
  double spread = 1.0;
  /// Scale of the Gaussian draw for class centers.
  double separation = 3.0;
  std::uint64_t seed = 0;
};

/// Seeded Gaussian clusters. Training ids count from 0 and validation ids
/// follow, so the two splits never share an example.
inline Splits synth_blobs(const BlobsConfig& c) {
  require(c.dim >= 1, ErrorKind::precondition, "blob dimension must be >= 1");
  require(c.classes >= 2, ErrorKind::precondition, "blobs need >= 2 classes");
  require(c.spread >= 0 && c.separation >= 0, ErrorKind::precondition, "spread and separation must be >= 0");
  Rng centers_rng(derive_seed(c.seed, {"centers"}));
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(c.classes), std::vector<double>(c.dim));
  for (auto& center : centers)
    for (double& v : center) v = c.separation * standard_normal(centers_rng);

  Splits s{Dataset(c.dim, c.classes), Dataset(c.dim, c.classes)};
  std::vector<double> x(c.dim);
  const auto fill = [&](Dataset& d, std::size_t per_class, const char* tag, std::int64_t first_id) {
    Rng rng(derive_seed(c.seed, {tag}));
    std::int64_t id = first_id;
    for (std::size_t i = 0; i < per_class; ++i)
      for (int k = 0; k < c.classes; ++k) {
        const auto& center = centers[static_cast<std::size_t>(k)];
        for (std::size_t j = 0; j < c.dim; ++j) x[j] = center[j] + c.spread * standard_normal(rng);
        d.add<double>(id++, x, k);
      }
  };
  fill(s.train, c.train_per_class, "train", 0);
  fill(s.validation, c.validation_per_class, "validation", static_cast<std::int64_t>(s.train.size()));
  return s;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view text, const std::string& where) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  require(ec == std::errc() && ptr == text.data() + text.size() && !text.empty(), ErrorKind::parse,
          where + ": cannot parse '" + std::string(text) + "' as a number");
  return value;
}

}  // namespace detail

struct CsvOptions {
  /// Class count; inferred as max label + 1 (at least 2) when absent.
  std::optional<int> num_classes;
  /// Ids start here when the file has no "id" column.
  std::int64_t first_id = 0;
};

/// Header row required. The label column is the one named "label", or the
/// last column otherwise; an optional "id" column supplies example ids.
inline Dataset parse_csv_dataset(std::string_view text, const std::string& source, const CsvOptions& opt = {}) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  require(!lines.empty(), ErrorKind::parse, source + ": missing header row");
  const auto header = detail::split_csv_line(lines[0]);
  std::optional<std::size_t> label_col, id_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "label") label_col = i;
    if (header[i] == "id") id_col = i;
  }
  if (!label_col) label_col = header.size() - 1;
  require(!id_col || *id_col != *label_col, ErrorKind::parse, source + ": id column cannot be the label column");
  const std::size_t dim = header.size() - 1 - (id_col ? 1 : 0);
  require(dim >= 1, ErrorKind::parse, source + ": no feature columns");
  for (const auto& h : header) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(h.data(), h.data() + h.size(), v);
    require(h.empty() || ec != std::errc() || ptr != h.data() + h.size(), ErrorKind::parse,
            source + ": first row must be a header, found numeric field '" + std::string(h) + "'");
  }

  struct Row {
    std::int64_t id;
    std::vector<double> x;
    int label;
  };
  std::vector<Row> rows;
  int max_label = 1;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string where = source + " line " + std::to_string(ln + 1);
    const auto fields = detail::split_csv_line(lines[ln]);
    require(fields.size() == header.size(), ErrorKind::parse,
            where + ": expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    Row r{opt.first_id + static_cast<std::int64_t>(ln - 1), {}, 0};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i == *label_col) {
        r.label = detail::parse_number<int>(fields[i], where);
        require(r.label >= 0, ErrorKind::parse, where + ": negative label");
      } else if (id_col && i == *id_col) {
        r.id = detail::parse_number<std::int64_t>(fields[i], where);
      } else {
        r.x.push_back(detail::parse_number<double>(fields[i], where));
      }
    }
    max_label = std::max(max_label, r.label);
    rows.push_back(std::move(r));
  }
  const int k = opt.num_classes.value_or(max_label + 1);
  Dataset d(dim, k);
  d.reserve(rows.size());
  for (const auto& r : rows) d.add<double>(r.id, r.x, r.label);
  return d;
}

inline Dataset load_csv_dataset(const fs::path& path, const CsvOptions& opt = {}) {
  return parse_csv_dataset(read_file(path), path.string(), opt);
}

/// Header "id,x0..x{d-1},label"; values printed with 9 significant digits.
inline std::string to_csv(const Dataset& d) {
  std::string out = "id";
  for (std::size_t j = 0; j < d.dim(); ++j) out += ",x" + std::to_string(j);
  out += ",label\n";
  char buf[32];
  for (std::size_t r = 0; r < d.size(); ++r) {
    out += std::to_string(d.id(r));
    for (float v : d.features(r)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out += buf;
    }
    out += "," + std::to_string(d.label(r)) + "\n";
  }
  return out;
}

}  // namespace camobrew::io

#endif  // CAMOBREW_IO_DATASETS_HPP
