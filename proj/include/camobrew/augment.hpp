#ifndef CAMOBREW_AUGMENT_HPP
#define CAMOBREW_AUGMENT_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/rng.hpp"

namespace camobrew {

enum class AugmentPolicy { none, hflip };

inline const char* to_string(AugmentPolicy p) { return p == AugmentPolicy::none ? "none" : "hflip"; }

/// Mirror every row of every channel: column c becomes width - 1 - c.
inline void hflip(std::span<const float> in, const ImageShape& shape, std::span<float> out) {
  require(in.size() == shape.size() && out.size() == in.size(), ErrorKind::dimension,
          "hflip: feature vector does not match the image shape");
  const std::size_t w = shape.width;
  for (std::size_t ch = 0; ch < shape.channels; ++ch)
    for (std::size_t r = 0; r < shape.height; ++r) {
      const std::size_t base = (ch * shape.height + r) * w;
      for (std::size_t c = 0; c < w; ++c) out[base + c] = in[base + w - 1 - c];
    }
}

inline std::vector<float> hflip(std::span<const float> in, const ImageShape& shape) {
  std::vector<float> out(in.size());
  hflip(in, shape, out);
  return out;
}

/// Per-(seed, epoch, example) coin, so draws do not depend on visit order.
inline bool flip_coin(std::uint64_t seed, std::uint64_t epoch, std::int64_t example_id) {
  Rng rng(derive_seed(seed, {"hflip", epoch, static_cast<std::uint64_t>(example_id)}));
  return uniform01(rng) < 0.5;
}

inline void check_policy(AugmentPolicy policy, const std::optional<ImageShape>& shape, std::size_t dim) {
  if (policy == AugmentPolicy::none) return;
  require(shape.has_value() && shape->size() == dim, ErrorKind::precondition,
          "hflip augmentation requires image-shaped features");
}

/// Training-time view of one example under `policy`: the input span when
/// untouched, otherwise `buffer` filled with the transformed features.
inline std::span<const float> augmented(AugmentPolicy policy, const std::optional<ImageShape>& shape,
                                        std::uint64_t seed, std::uint64_t epoch, std::int64_t id,
                                        std::span<const float> x, std::vector<float>& buffer) {
  if (policy == AugmentPolicy::none || !flip_coin(seed, epoch, id)) return x;
  buffer.resize(x.size());
  hflip(x, *shape, buffer);
  return buffer;
}

/// Epoch view of a whole dataset (materialized); used by tests and tooling.
inline std::vector<std::vector<float>> augmentation_policy(const DataView& data, AugmentPolicy policy,
                                                           std::uint64_t seed, std::uint64_t epoch) {
  check_policy(policy, data.base().image_shape, data.dim());
  std::vector<std::vector<float>> out;
  out.reserve(data.size());
  std::vector<float> buf;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto v = augmented(policy, data.base().image_shape, seed, epoch, data.id(i), data.features(i), buf);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

}  // namespace camobrew

#endif  // CAMOBREW_AUGMENT_HPP
