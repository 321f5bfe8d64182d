#ifndef CAMOBREW_TRAIN_HPP
#define CAMOBREW_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "camobrew/augment.hpp"
#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/model.hpp"
#include "camobrew/rng.hpp"

namespace camobrew {

enum class Reduction { mean, sum };

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 100;
  int epochs = 40;
  bool shuffle_each_epoch = true;
};

/// Full-batch gradient descent on (reduced loss + weight_decay/2 * |theta|^2),
/// stopping early once the objective changes by less than `tol`.
struct FullBatchOptions {
  double lr = 1.0;
  int steps = 2000;
  double weight_decay = 1e-4;
  double tol = 1e-6;
  Reduction reduction = Reduction::mean;
};

struct TrainConfig {
  std::variant<SgdOptions, FullBatchOptions> optimizer = FullBatchOptions{};
  std::uint64_t seed = 0;
  AugmentPolicy augmentation = AugmentPolicy::none;

  void validate() const {
    if (const auto* s = std::get_if<SgdOptions>(&optimizer)) {
      require(s->lr > 0, ErrorKind::precondition, "sgd learning rate must be > 0");
      require(s->epochs >= 1, ErrorKind::precondition, "sgd needs at least one epoch");
      require(s->batch_size >= 1, ErrorKind::precondition, "sgd batch size must be >= 1");
      require(s->momentum >= 0 && s->momentum < 1, ErrorKind::precondition, "sgd momentum must be in [0,1)");
      require(s->weight_decay >= 0, ErrorKind::precondition, "weight decay must be >= 0");
    } else {
      const auto& g = std::get<FullBatchOptions>(optimizer);
      require(g.lr > 0, ErrorKind::precondition, "gradient descent learning rate must be > 0");
      require(g.steps >= 1, ErrorKind::precondition, "gradient descent needs at least one step");
      require(g.weight_decay >= 0, ErrorKind::precondition, "weight decay must be >= 0");
      require(g.tol >= 0, ErrorKind::precondition, "tolerance must be >= 0");
    }
  }
};

/// Called once per full-batch step (theta before the update) or once per
/// SGD epoch (theta after the epoch), with the objective value.
using TrainObserver = std::function<void(int, std::span<const double>, double)>;

namespace detail {

inline void check_compatible(const ModelSpec& spec, const DataView& data) {
  spec.validate();
  require(!data.empty(), ErrorKind::precondition, "training set is empty");
  require(data.dim() == spec.input_dim, ErrorKind::dimension,
          "training set dimension " + std::to_string(data.dim()) + " does not match model input " +
              std::to_string(spec.input_dim));
  require(data.num_classes() == spec.num_classes, ErrorKind::mismatch, "training set class count differs from model");
  require(data.base().preprocessing == spec.preprocessing, ErrorKind::mismatch,
          std::string("model preprocessing ") + to_string(spec.preprocessing) + " does not match dataset " +
              to_string(data.base().preprocessing));
}

inline double penalty(std::span<const double> theta, double wd) {
  return wd == 0.0 ? 0.0 : 0.5 * wd * linalg::squared_norm(theta);
}

/// Objective and gradient over `rows` (in order) at theta.
inline double batch_objective(const ModelSpec& spec, std::span<const double> theta, const DataView& data,
                              std::span<const std::size_t> rows, double weight, const TrainConfig& cfg,
                              std::uint64_t epoch, Workspace& ws, std::vector<float>& aug, std::span<double> grad) {
  double total = 0.0;
  for (std::size_t i : rows) {
    auto x = augmented(cfg.augmentation, data.base().image_shape, cfg.seed, epoch, data.id(i), data.features(i), aug);
    forward(spec, theta, x, ws);
    total += loss_and_delta(spec, data.label(i), ws);
    accumulate_grad(spec, theta, x, weight, ws, grad);
  }
  return total * weight;
}

}  // namespace detail

/// Objective (reduced loss + weight decay term) without augmentation.
inline double training_objective(const ModelParams& params, const DataView& data, double weight_decay,
                                 Reduction reduction = Reduction::mean) {
  detail::Workspace ws;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(params.spec, params.theta, data.features(i), ws);
    total += detail::loss_and_delta(params.spec, data.label(i), ws);
  }
  if (reduction == Reduction::mean) total /= static_cast<double>(data.size());
  return total + detail::penalty(params.theta, weight_decay);
}

inline ModelParams train(const ModelSpec& spec, const DataView& data, const TrainConfig& cfg,
                         const TrainObserver& observer = {}) {
  detail::check_compatible(spec, data);
  cfg.validate();
  check_policy(cfg.augmentation, data.base().image_shape, data.dim());

  ModelParams params = init_params(spec, cfg.seed);
  std::vector<double>& theta = params.theta;
  std::vector<double> grad(theta.size());
  detail::Workspace ws;
  std::vector<float> aug;
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  if (const auto* gd = std::get_if<FullBatchOptions>(&cfg.optimizer)) {
    const double weight = gd->reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
    double previous = std::numeric_limits<double>::quiet_NaN();
    for (int step = 0; step < gd->steps; ++step) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double obj = detail::batch_objective(spec, theta, data, order, weight, cfg, static_cast<std::uint64_t>(step),
                                           ws, aug, grad);
      obj += detail::penalty(theta, gd->weight_decay);
      require(std::isfinite(obj), ErrorKind::non_finite,
              "training diverged: non-finite objective at step " + std::to_string(step));
      if (observer) observer(step, theta, obj);
      if (gd->tol > 0 && std::fabs(obj - previous) < gd->tol) break;
      previous = obj;
      for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= gd->lr * (grad[j] + gd->weight_decay * theta[j]);
    }
    params.final_loss = training_objective(params, data, gd->weight_decay, gd->reduction);
    return params;
  }

  const auto& sgd = std::get<SgdOptions>(cfg.optimizer);
  std::vector<double> velocity(theta.size(), 0.0);
  for (int epoch = 0; epoch < sgd.epochs; ++epoch) {
    if (sgd.shuffle_each_epoch) {
      Rng rng(derive_seed(cfg.seed, {"epoch", epoch}));
      shuffle(order, rng);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += sgd.batch_size) {
      const std::size_t len = std::min(sgd.batch_size, n - start);
      std::span<const std::size_t> rows(order.data() + start, len);
      std::fill(grad.begin(), grad.end(), 0.0);
      epoch_loss += detail::batch_objective(spec, theta, data, rows, 1.0 / static_cast<double>(len), cfg,
                                            static_cast<std::uint64_t>(epoch), ws, aug, grad) *
                    static_cast<double>(len);
      for (std::size_t j = 0; j < theta.size(); ++j) {
        velocity[j] = sgd.momentum * velocity[j] + grad[j] + sgd.weight_decay * theta[j];
        theta[j] -= sgd.lr * velocity[j];
      }
    }
    const double obj = epoch_loss / static_cast<double>(n) + detail::penalty(theta, sgd.weight_decay);
    require(std::isfinite(obj), ErrorKind::non_finite,
            "training diverged: non-finite loss in epoch " + std::to_string(epoch));
    if (observer) observer(epoch, theta, obj);
  }
  params.final_loss = training_objective(params, data, sgd.weight_decay);
  return params;
}

inline ModelParams train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
                         const TrainObserver& observer = {}) {
  return train(spec, DataView::all(data), cfg, observer);
}

}  // namespace camobrew

#endif  // CAMOBREW_TRAIN_HPP
