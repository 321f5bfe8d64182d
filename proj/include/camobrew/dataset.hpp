#ifndef CAMOBREW_DATASET_HPP
#define CAMOBREW_DATASET_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "camobrew/error.hpp"

namespace camobrew {

enum class Role : std::uint8_t { clean, poison, camouflage };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::clean: return "clean";
    case Role::poison: return "poison";
    case Role::camouflage: return "camouflage";
  }
  return "?";
}

/// Fixed front transform applied by the model to raw features. All three
/// variants are a per-example positive rescaling z = c(x) * x.
enum class Preprocessing { none, l2_normalize, unit_scale };

inline const char* to_string(Preprocessing p) {
  switch (p) {
    case Preprocessing::none: return "none";
    case Preprocessing::l2_normalize: return "l2-normalize";
    case Preprocessing::unit_scale: return "scale-to-unit";
  }
  return "?";
}

struct FeatureRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static FeatureRange pixels() { return {0.0, 255.0}; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
};

/// Planar channel-major layout: index = (c * height + row) * width + col.
struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
};

struct Example {
  std::int64_t id = 0;
  std::vector<float> features;
  int label = 0;
};

/// Owning, row-major feature store with labels, ids and role tags.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, int num_classes) : dim_(dim), num_classes_(num_classes) {
    require(dim >= 1, ErrorKind::precondition, "dataset dimension must be >= 1");
    require(num_classes >= 2, ErrorKind::precondition, "dataset needs >= 2 classes");
  }

  void reserve(std::size_t rows) {
    data_.reserve(rows * dim_);
    labels_.reserve(rows);
    ids_.reserve(rows);
    roles_.reserve(rows);
  }

  template <typename T>
  void add(std::int64_t id, std::span<const T> features, int label, Role role = Role::clean) {
    require(features.size() == dim_, ErrorKind::dimension,
            "example " + std::to_string(id) + " has dimension " +
                std::to_string(features.size()) + ", dataset expects " + std::to_string(dim_));
    require(label >= 0 && label < num_classes_, ErrorKind::precondition,
            "example " + std::to_string(id) + " label " + std::to_string(label) +
                " outside [0, " + std::to_string(num_classes_) + ")");
    require(index_.emplace(id, ids_.size()).second, ErrorKind::precondition,
            "duplicate example id " + std::to_string(id));
    for (T v : features) data_.push_back(static_cast<float>(v));
    labels_.push_back(label);
    ids_.push_back(id);
    roles_.push_back(role);
  }

  void add(const Example& ex, Role role = Role::clean) {
    add<float>(ex.id, ex.features, ex.label, role);
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t dim() const { return dim_; }
  int num_classes() const { return num_classes_; }

  std::span<const float> features(std::size_t row) const {
    return {data_.data() + row * dim_, dim_};
  }
  int label(std::size_t row) const { return labels_[row]; }
  std::int64_t id(std::size_t row) const { return ids_[row]; }
  Role role(std::size_t row) const { return roles_[row]; }
  void set_role(std::size_t row, Role r) { roles_[row] = r; }

  Example example(std::size_t row) const {
    auto f = features(row);
    return {ids_[row], {f.begin(), f.end()}, labels_[row]};
  }

  std::optional<std::size_t> find_row(std::int64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t count_label(int label) const {
    std::size_t n = 0;
    for (int l : labels_) n += (l == label);
    return n;
  }

  std::size_t count_role(Role r) const {
    std::size_t n = 0;
    for (Role x : roles_) n += (x == r);
    return n;
  }

  Preprocessing preprocessing = Preprocessing::none;
  FeatureRange feature_range{};
  std::optional<ImageShape> image_shape;
  std::vector<std::string> class_names;

 private:
  std::size_t dim_ = 0;
  int num_classes_ = 0;
  std::vector<float> data_;
  std::vector<int> labels_;
  std::vector<std::int64_t> ids_;
  std::vector<Role> roles_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

/// A training set composed from rows of a base Dataset, with optionally
/// replaced feature vectors and appended examples. Perturbed training sets
/// are built this way so large bases are never copied.
class DataView {
 public:
  explicit DataView(const Dataset& base) : base_(&base) {}

  static DataView all(const Dataset& base) {
    DataView v(base);
    v.rows_.reserve(base.size());
    for (std::size_t r = 0; r < base.size(); ++r) v.add_base_row(r, base.role(r));
    return v;
  }

  void add_base_row(std::size_t row, Role role = Role::clean) {
    rows_.push_back({row, base_->label(row), base_->id(row), role, -1});
  }

  void add_modified_row(std::size_t row, std::vector<float> features, Role role) {
    require(features.size() == base_->dim(), ErrorKind::dimension, "modified row dimension mismatch");
    extras_.push_back(std::move(features));
    rows_.push_back({row, base_->label(row), base_->id(row), role,
                     static_cast<std::int32_t>(extras_.size() - 1)});
  }

  void add_new(std::int64_t id, std::vector<float> features, int label, Role role) {
    require(features.size() == base_->dim(), ErrorKind::dimension, "new row dimension mismatch");
    require(label >= 0 && label < base_->num_classes(), ErrorKind::precondition, "new row label out of range");
    extras_.push_back(std::move(features));
    rows_.push_back({kNoRow, label, id, role, static_cast<std::int32_t>(extras_.size() - 1)});
  }

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  std::size_t dim() const { return base_->dim(); }
  int num_classes() const { return base_->num_classes(); }
  const Dataset& base() const { return *base_; }

  std::span<const float> features(std::size_t i) const {
    const Row& r = rows_[i];
    if (r.extra >= 0) return extras_[static_cast<std::size_t>(r.extra)];
    return base_->features(r.base_row);
  }
  int label(std::size_t i) const { return rows_[i].label; }
  std::int64_t id(std::size_t i) const { return rows_[i].id; }
  Role role(std::size_t i) const { return rows_[i].role; }

  std::size_t count(Role r) const {
    std::size_t n = 0;
    for (const auto& row : rows_) n += (row.role == r);
    return n;
  }

  /// Same rows in the same order, minus every row tagged `r`.
  DataView without(Role r) const {
    DataView out(*base_);
    for (const auto& row : rows_) {
      if (row.role == r) continue;
      Row copy = row;
      if (row.extra >= 0) {
        out.extras_.push_back(extras_[static_cast<std::size_t>(row.extra)]);
        copy.extra = static_cast<std::int32_t>(out.extras_.size() - 1);
      }
      out.rows_.push_back(copy);
    }
    return out;
  }

  std::vector<std::int64_t> ids() const {
    std::vector<std::int64_t> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r.id);
    return out;
  }

 private:
  static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);
  struct Row {
    std::size_t base_row;
    int label;
    std::int64_t id;
    Role role;
    std::int32_t extra;
  };
  const Dataset* base_;
  std::vector<Row> rows_;
  std::vector<std::vector<float>> extras_;
};

namespace detail {
inline void hash_bytes(std::uint64_t& h, const unsigned char* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}
template <typename T>
void hash_le(std::uint64_t& h, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  }
  hash_bytes(h, buf, sizeof(T));
}
}  // namespace detail

/// FNV-1a over a canonical little-endian serialization of dimension, class
/// count and every (id, label, features) record.
inline std::uint64_t content_hash(const Dataset& d, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  detail::hash_le<std::uint64_t>(h, d.dim());
  detail::hash_le<std::int32_t>(h, d.num_classes());
  for (std::size_t r = 0; r < d.size(); ++r) {
    detail::hash_le<std::int64_t>(h, d.id(r));
    detail::hash_le<std::int32_t>(h, d.label(r));
    for (float v : d.features(r)) detail::hash_le<float>(h, v);
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace camobrew

#endif  // CAMOBREW_DATASET_HPP
