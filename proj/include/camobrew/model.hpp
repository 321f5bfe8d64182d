#ifndef CAMOBREW_MODEL_HPP
#define CAMOBREW_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/linalg.hpp"
#include "camobrew/rng.hpp"

namespace camobrew {

enum class Family {
  linear_binary_linear_loss,
  linear_binary_hinge,
  linear_softmax_crossentropy,
  mlp1_softmax_crossentropy,
};

enum class Activation { tanh, relu };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::linear_binary_linear_loss: return "linear-binary-linear-loss";
    case Family::linear_binary_hinge: return "linear-binary-hinge";
    case Family::linear_softmax_crossentropy: return "linear-softmax-crossentropy";
    case Family::mlp1_softmax_crossentropy: return "mlp1-softmax-crossentropy";
  }
  return "?";
}

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

/// Binary families see class index 1 as y = +1 and class index 0 as y = -1.
inline int signed_label(int class_index) { return class_index == 1 ? 1 : -1; }
inline int class_of_sign(int y) { return y > 0 ? 1 : 0; }

struct ModelSpec {
  Family family = Family::linear_binary_hinge;
  std::size_t input_dim = 0;
  int num_classes = 2;
  std::size_t hidden_width = 0;
  Activation activation = Activation::tanh;
  Preprocessing preprocessing = Preprocessing::none;

  bool binary() const {
    return family == Family::linear_binary_linear_loss || family == Family::linear_binary_hinge;
  }
  bool is_mlp() const { return family == Family::mlp1_softmax_crossentropy; }
  std::size_t output_size() const { return binary() ? 1 : static_cast<std::size_t>(num_classes); }

  std::size_t param_count() const {
    const std::size_t d = input_dim;
    const std::size_t k = static_cast<std::size_t>(num_classes);
    switch (family) {
      case Family::linear_binary_linear_loss:
      case Family::linear_binary_hinge: return d + 1;
      case Family::linear_softmax_crossentropy: return k * d + k;
      case Family::mlp1_softmax_crossentropy: return hidden_width * d + hidden_width + k * hidden_width + k;
    }
    return 0;
  }

  void validate() const {
    require(input_dim >= 1, ErrorKind::precondition, "model input dimension must be >= 1");
    require(num_classes >= 2, ErrorKind::precondition, "model needs >= 2 classes");
    if (binary()) require(num_classes == 2, ErrorKind::precondition, "binary model families need exactly 2 classes");
    if (is_mlp()) require(hidden_width >= 1, ErrorKind::precondition, "mlp1 hidden width must be >= 1");
  }

  /// Stable identifier recorded in checkpoints and perturbation files.
  std::string id() const {
    std::string s = to_string(family);
    if (is_mlp()) s += "/h" + std::to_string(hidden_width) + "/" + to_string(activation);
    s += "/";
    s += to_string(preprocessing);
    s += "/d" + std::to_string(input_dim) + "/k" + std::to_string(num_classes);
    return s;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset;
  std::size_t rows;
  std::size_t cols;
};

inline std::vector<ParamBlock> layout(const ModelSpec& spec) {
  const std::size_t d = spec.input_dim;
  const std::size_t k = static_cast<std::size_t>(spec.num_classes);
  const std::size_t h = spec.hidden_width;
  switch (spec.family) {
    case Family::linear_binary_linear_loss:
    case Family::linear_binary_hinge: return {{"weight", 0, 1, d}, {"bias", d, 1, 1}};
    case Family::linear_softmax_crossentropy: return {{"weight", 0, k, d}, {"bias", k * d, k, 1}};
    case Family::mlp1_softmax_crossentropy:
      return {{"hidden.weight", 0, h, d},
              {"hidden.bias", h * d, h, 1},
              {"output.weight", h * d + h, k, h},
              {"output.bias", h * d + h + k * h, k, 1}};
  }
  return {};
}

struct ModelParams {
  ModelSpec spec;
  std::vector<double> theta;
  double final_loss = std::numeric_limits<double>::quiet_NaN();

  void validate() const {
    spec.validate();
    require(theta.size() == spec.param_count(), ErrorKind::dimension,
            "parameter vector has " + std::to_string(theta.size()) + " entries, " + spec.id() +
                " expects " + std::to_string(spec.param_count()));
    for (double v : theta) require(std::isfinite(v), ErrorKind::non_finite, "non-finite model parameter");
  }
};

/// Zero for the linear families; uniform(+-1/sqrt(fan_in)) for mlp1.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p{spec, std::vector<double>(spec.param_count(), 0.0)};
  if (!spec.is_mlp()) return p;
  Rng rng(derive_seed(seed, {"init"}));
  for (const auto& block : layout(spec)) {
    const std::size_t fan_in = block.name.rfind("hidden", 0) == 0 ? spec.input_dim : spec.hidden_width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < block.rows * block.cols; ++i)
      p.theta[block.offset + i] = uniform(rng, -bound, bound);
  }
  return p;
}

namespace detail {

struct Workspace {
  double scale = 1.0;
  std::vector<double> pre;     // hidden pre-activation
  std::vector<double> hidden;  // hidden activation
  std::vector<double> scores;
  std::vector<double> probs;
  std::vector<double> delta;   // dloss/dscores
  std::vector<double> dhidden;
  std::vector<double> dpre;
  std::vector<double> gz;
};

template <typename T>
double input_scale(Preprocessing p, std::span<const T> x) {
  switch (p) {
    case Preprocessing::none: return 1.0;
    case Preprocessing::unit_scale: return 1.0 / 255.0;
    case Preprocessing::l2_normalize: {
      const double n = linalg::norm(x);
      require(n > 0.0 && std::isfinite(n), ErrorKind::non_finite,
              "layer preprocess: l2-normalization of a zero or non-finite input");
      return 1.0 / n;
    }
  }
  return 1.0;
}

inline double act(Activation a, double v) { return a == Activation::tanh ? std::tanh(v) : (v > 0 ? v : 0.0); }
inline double act_d1(Activation a, double pre, double h) {
  return a == Activation::tanh ? 1.0 - h * h : (pre > 0 ? 1.0 : 0.0);
}
inline double act_d2(Activation a, double h) { return a == Activation::tanh ? -2.0 * h * (1.0 - h * h) : 0.0; }

inline void check_finite(std::span<const double> v, const char* layer) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorKind::non_finite, std::string("layer ") + layer + ": non-finite value");
}

template <typename T>
void forward(const ModelSpec& spec, std::span<const double> theta, std::span<const T> x, Workspace& ws) {
  require(x.size() == spec.input_dim, ErrorKind::dimension,
          "input has dimension " + std::to_string(x.size()) + ", model expects " + std::to_string(spec.input_dim));
  const std::size_t d = spec.input_dim;
  const std::size_t k = static_cast<std::size_t>(spec.num_classes);
  ws.scale = input_scale(spec.preprocessing, x);
  const double c = ws.scale;
  switch (spec.family) {
    case Family::linear_binary_linear_loss:
    case Family::linear_binary_hinge:
      ws.scores.assign(1, c * linalg::dot(theta.subspan(0, d), x) + theta[d]);
      break;
    case Family::linear_softmax_crossentropy:
      ws.scores.resize(k);
      for (std::size_t j = 0; j < k; ++j) ws.scores[j] = c * linalg::dot(theta.subspan(j * d, d), x) + theta[k * d + j];
      break;
    case Family::mlp1_softmax_crossentropy: {
      const std::size_t h = spec.hidden_width;
      ws.pre.resize(h);
      ws.hidden.resize(h);
      for (std::size_t j = 0; j < h; ++j) {
        ws.pre[j] = c * linalg::dot(theta.subspan(j * d, d), x) + theta[h * d + j];
        ws.hidden[j] = act(spec.activation, ws.pre[j]);
      }
      check_finite(ws.hidden, "hidden");
      const std::size_t w2 = h * d + h;
      ws.scores.resize(k);
      for (std::size_t j = 0; j < k; ++j)
        ws.scores[j] = linalg::dot<double, double>(theta.subspan(w2 + j * h, h), ws.hidden) + theta[w2 + k * h + j];
      break;
    }
  }
  check_finite(ws.scores, "output");
}

/// Loss at the scores in `ws`; fills ws.delta with dloss/dscores.
inline double loss_and_delta(const ModelSpec& spec, int label, Workspace& ws) {
  require(label >= 0 && label < spec.num_classes, ErrorKind::precondition,
          "label " + std::to_string(label) + " invalid for " + spec.id());
  if (spec.binary()) {
    const double y = signed_label(label);
    const double f = ws.scores[0];
    ws.delta.assign(1, 0.0);
    if (spec.family == Family::linear_binary_linear_loss) {
      ws.delta[0] = -y;
      return -y * f;
    }
    const double margin = y * f;
    // Zero branch of the subgradient at the kink.
    if (margin < 1.0) {
      ws.delta[0] = -y;
      return 1.0 - margin;
    }
    return 0.0;
  }
  const std::size_t k = ws.scores.size();
  const double mx = *std::max_element(ws.scores.begin(), ws.scores.end());
  double z = 0.0;
  ws.probs.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    ws.probs[j] = std::exp(ws.scores[j] - mx);
    z += ws.probs[j];
  }
  ws.delta.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    ws.probs[j] /= z;
    ws.delta[j] = ws.probs[j] - (static_cast<int>(j) == label ? 1.0 : 0.0);
  }
  const double loss = std::log(z) + mx - ws.scores[static_cast<std::size_t>(label)];
  if (!std::isfinite(loss)) throw Error(ErrorKind::non_finite, "layer loss: non-finite cross-entropy");
  return loss;
}

/// grad += weight * d loss / d theta, given forward + loss_and_delta state.
template <typename T>
void accumulate_grad(const ModelSpec& spec, std::span<const double> theta, std::span<const T> x, double weight,
                     Workspace& ws, std::span<double> grad) {
  const std::size_t d = spec.input_dim;
  const std::size_t k = static_cast<std::size_t>(spec.num_classes);
  const double c = ws.scale;
  switch (spec.family) {
    case Family::linear_binary_linear_loss:
    case Family::linear_binary_hinge: {
      const double coef = weight * ws.delta[0];
      if (coef == 0.0) return;
      linalg::axpy(coef * c, x, grad.subspan(0, d));
      grad[d] += coef;
      return;
    }
    case Family::linear_softmax_crossentropy:
      for (std::size_t j = 0; j < k; ++j) {
        const double coef = weight * ws.delta[j];
        linalg::axpy(coef * c, x, grad.subspan(j * d, d));
        grad[k * d + j] += coef;
      }
      return;
    case Family::mlp1_softmax_crossentropy: {
      const std::size_t h = spec.hidden_width;
      const std::size_t w2 = h * d + h;
      ws.dhidden.assign(h, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        const double coef = weight * ws.delta[j];
        linalg::axpy<double>(coef, ws.hidden, grad.subspan(w2 + j * h, h));
        grad[w2 + k * h + j] += coef;
        linalg::axpy<double>(ws.delta[j], theta.subspan(w2 + j * h, h), ws.dhidden);
      }
      for (std::size_t i = 0; i < h; ++i) {
        const double coef = weight * act_d1(spec.activation, ws.pre[i], ws.hidden[i]) * ws.dhidden[i];
        if (coef == 0.0) continue;
        linalg::axpy(coef * c, x, grad.subspan(i * d, d));
        grad[h * d + i] += coef;
      }
      return;
    }
  }
}

/// Softmax Jacobian (symmetric) applied to u.
inline void softmax_jvp(std::span<const double> p, std::span<const double> u, std::span<double> out) {
  double pu = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) pu += p[j] * u[j];
  for (std::size_t j = 0; j < p.size(); ++j) out[j] = p[j] * u[j] - p[j] * pu;
}

}  // namespace detail

template <typename T>
std::vector<double> forward(const ModelParams& params, std::span<const T> x) {
  detail::Workspace ws;
  detail::forward(params.spec, params.theta, x, ws);
  return ws.scores;
}

template <typename T>
double loss(const ModelParams& params, std::span<const T> x, int label) {
  detail::Workspace ws;
  detail::forward(params.spec, params.theta, x, ws);
  return detail::loss_and_delta(params.spec, label, ws);
}

template <typename T>
std::vector<double> grad_params(const ModelParams& params, std::span<const T> x, int label) {
  detail::Workspace ws;
  detail::forward(params.spec, params.theta, x, ws);
  detail::loss_and_delta(params.spec, label, ws);
  std::vector<double> g(params.theta.size(), 0.0);
  detail::accumulate_grad(params.spec, params.theta, x, 1.0, ws, g);
  return g;
}

/// Gradient with respect to the raw input x of <w, grad_theta loss(x, y)>,
/// including the preprocessing layer's Jacobian.
template <typename T>
std::vector<double> mixed_vjp(const ModelParams& params, std::span<const T> x, int label, std::span<const double> w) {
  const ModelSpec& spec = params.spec;
  require(w.size() == spec.param_count(), ErrorKind::dimension, "mixed_vjp direction has the wrong layout");
  const std::span<const double> theta = params.theta;
  detail::Workspace ws;
  detail::forward(spec, theta, x, ws);
  detail::loss_and_delta(spec, label, ws);
  const std::size_t d = spec.input_dim;
  const std::size_t k = static_cast<std::size_t>(spec.num_classes);
  const double c = ws.scale;
  std::vector<double> gz(d, 0.0);

  switch (spec.family) {
    case Family::linear_binary_linear_loss:
    case Family::linear_binary_hinge:
      // The loss is piecewise linear in the score, so only the direct term survives.
      if (ws.delta[0] != 0.0) linalg::axpy<double>(ws.delta[0], w.subspan(0, d), gz);
      break;
    case Family::linear_softmax_crossentropy: {
      std::vector<double> u(k), ju(k);
      for (std::size_t j = 0; j < k; ++j) u[j] = c * linalg::dot(w.subspan(j * d, d), x) + w[k * d + j];
      detail::softmax_jvp(ws.probs, u, ju);
      for (std::size_t j = 0; j < k; ++j) {
        linalg::axpy<double>(ju[j], theta.subspan(j * d, d), gz);
        linalg::axpy<double>(ws.delta[j], w.subspan(j * d, d), gz);
      }
      break;
    }
    case Family::mlp1_softmax_crossentropy: {
      const std::size_t h = spec.hidden_width;
      const std::size_t w2 = h * d + h;
      const Activation a = spec.activation;
      std::vector<double> dh(h, 0.0), r(h), q(k), s1(h), dbar(k), sbar(k), hbar(h, 0.0), abar(h);
      for (std::size_t j = 0; j < k; ++j) {
        linalg::axpy<double>(ws.delta[j], theta.subspan(w2 + j * h, h), dh);
        q[j] = linalg::dot<double, double>(w.subspan(w2 + j * h, h), ws.hidden) + w[w2 + k * h + j];
      }
      for (std::size_t i = 0; i < h; ++i) {
        r[i] = c * linalg::dot(w.subspan(i * d, d), x) + w[h * d + i];
        s1[i] = detail::act_d1(a, ws.pre[i], ws.hidden[i]);
      }
      for (std::size_t j = 0; j < k; ++j) {
        double acc = q[j];
        for (std::size_t i = 0; i < h; ++i) acc += theta[w2 + j * h + i] * s1[i] * r[i];
        dbar[j] = acc;
      }
      detail::softmax_jvp(ws.probs, dbar, sbar);
      for (std::size_t j = 0; j < k; ++j) {
        linalg::axpy<double>(ws.delta[j], w.subspan(w2 + j * h, h), hbar);
        linalg::axpy<double>(sbar[j], theta.subspan(w2 + j * h, h), hbar);
      }
      for (std::size_t i = 0; i < h; ++i) {
        abar[i] = detail::act_d2(a, ws.hidden[i]) * dh[i] * r[i] + s1[i] * hbar[i];
        const double da = s1[i] * dh[i];
        linalg::axpy<double>(da, w.subspan(i * d, d), gz);
        linalg::axpy<double>(abar[i], theta.subspan(i * d, d), gz);
      }
      break;
    }
  }

  // Transpose of the preprocessing Jacobian; every variant scales by c.
  if (spec.preprocessing == Preprocessing::l2_normalize) {
    double zg = 0.0;
    for (std::size_t i = 0; i < d; ++i) zg += c * static_cast<double>(x[i]) * gz[i];
    for (std::size_t i = 0; i < d; ++i) gz[i] = c * (gz[i] - c * static_cast<double>(x[i]) * zg);
  } else if (c != 1.0) {
    for (double& v : gz) v *= c;
  }
  return gz;
}

/// Binary: class 1 when the score is >= 0. Multiclass: argmax, lowest
/// index on ties.
inline int predict_from_scores(const ModelSpec& spec, std::span<const double> scores) {
  if (spec.binary()) return scores[0] >= 0.0 ? 1 : 0;
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

template <typename T>
int predict(const ModelParams& params, std::span<const T> x) {
  const auto s = forward(params, x);
  return predict_from_scores(params.spec, s);
}

template <typename Data>
double validation_accuracy(const ModelParams& params, const Data& data) {
  require(data.size() > 0, ErrorKind::precondition, "validation accuracy of an empty dataset");
  detail::Workspace ws;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(params.spec, params.theta, data.features(i), ws);
    correct += predict_from_scores(params.spec, ws.scores) == data.label(i);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Representation used for feature-space distances: the preprocessed input
/// for linear families, the hidden activation for mlp1.
template <typename T>
std::vector<double> feature_map(const ModelParams& params, std::span<const T> x) {
  detail::Workspace ws;
  detail::forward(params.spec, params.theta, x, ws);
  if (params.spec.is_mlp()) return ws.hidden;
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = ws.scale * static_cast<double>(x[i]);
  return z;
}

}  // namespace camobrew

#endif  // CAMOBREW_MODEL_HPP
