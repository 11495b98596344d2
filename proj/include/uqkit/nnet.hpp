#pragma once

// Small feedforward networks with hand-written reverse-mode gradients:
// dense, residual (x + g(x)), dropout, spectral-normalized dense, and
// Gaussian/scalar output layers, trained by SGD or Adam with MSE or
// Gaussian-NLL loss.
//
// Parameter layout (the flat theta vector, in layer order):
//   Dense / SpectralDense : W row-major (width x in), then b (width)
//   Residual              : inner W row-major (width x width), then b (width)
//   Dropout               : no parameters
//   GaussianOutput        : w_mu (in), b_mu, w_var (in), b_var
//   ScalarOutput          : w (in), b
//
// Dropout uses inverted scaling (kept units are divided by 1 - rate) in both
// train mode and eval_with_dropout mode, so eval mode needs no correction and
// MC-dropout passes share the training scale.

#include "uqkit/numerics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqkit {

enum class Activation { Relu, Tanh, Identity };

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

inline double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

struct Layer {
  enum class Kind { Dense, Residual, Dropout, SpectralDense, GaussianOutput, ScalarOutput };
  Kind kind = Kind::Dense;
  int width = 0;
  Activation activation = Activation::Relu;
  double rate = 0.0;   // dropout rate
  double gamma = 0.0;  // spectral norm upper bound (> 0 enables normalization)

  static Layer dense(int width, Activation act) { return {Kind::Dense, width, act, 0.0, 0.0}; }
  // Residual block out = x + act(W x + b); input width must equal `width`.
  // A positive gamma bounds the inner weight's spectral norm alongside the
  // SpectralDense layers.
  static Layer residual(int width, Activation act, double gamma = 0.0) {
    return {Kind::Residual, width, act, 0.0, gamma};
  }
  static Layer dropout(double rate) { return {Kind::Dropout, 0, Activation::Identity, rate, 0.0}; }
  static Layer spectral_dense(int width, Activation act, double gamma) {
    return {Kind::SpectralDense, width, act, 0.0, gamma};
  }
  static Layer gaussian_output() { return {Kind::GaussianOutput, 1, Activation::Identity, 0.0, 0.0}; }
  static Layer scalar_output() { return {Kind::ScalarOutput, 1, Activation::Identity, 0.0, 0.0}; }

  bool is_output() const { return kind == Kind::GaussianOutput || kind == Kind::ScalarOutput; }
  bool has_spectral_bound() const {
    return (kind == Kind::SpectralDense || kind == Kind::Residual) && gamma > 0.0;
  }
};

struct NetworkSpec {
  int input_dim = 0;
  std::vector<Layer> layers;

  bool has_output_layer() const { return !layers.empty() && layers.back().is_output(); }
  bool has_dropout() const {
    for (const auto& l : layers)
      if (l.kind == Layer::Kind::Dropout) return true;
    return false;
  }
};

namespace detail {

inline void validate_spec(const NetworkSpec& spec, bool require_output) {
  if (spec.input_dim <= 0) throw std::invalid_argument("network: input_dim must be positive");
  int width = spec.input_dim;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const Layer& l = spec.layers[i];
    if (l.is_output() && i + 1 != spec.layers.size())
      throw std::invalid_argument("network: output layer must be terminal");
    switch (l.kind) {
      case Layer::Kind::Dense:
      case Layer::Kind::SpectralDense:
        if (l.width <= 0) throw std::invalid_argument("network: layer width must be positive");
        if (l.kind == Layer::Kind::SpectralDense && !(l.gamma > 0.0))
          throw std::invalid_argument("network: spectral bound must be positive");
        width = l.width;
        break;
      case Layer::Kind::Residual:
        if (l.width <= 0) throw std::invalid_argument("network: layer width must be positive");
        if (l.width != width)
          throw std::invalid_argument("network: residual block width must match its input");
        break;
      case Layer::Kind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0))
          throw std::invalid_argument("network: dropout rate must lie in [0, 1)");
        break;
      case Layer::Kind::GaussianOutput:
      case Layer::Kind::ScalarOutput:
        break;
    }
  }
  if (require_output && !spec.has_output_layer())
    throw std::invalid_argument("network: exactly one terminal output layer required");
}

struct LayerLayout {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
};

inline std::vector<LayerLayout> make_layout(const NetworkSpec& spec) {
  std::vector<LayerLayout> table;
  table.reserve(spec.layers.size());
  Eigen::Index offset = 0;
  Eigen::Index width = spec.input_dim;
  for (const Layer& l : spec.layers) {
    LayerLayout ll;
    ll.offset = offset;
    ll.in_dim = width;
    switch (l.kind) {
      case Layer::Kind::Dense:
      case Layer::Kind::SpectralDense:
        ll.out_dim = l.width;
        ll.size = static_cast<Eigen::Index>(l.width) * width + l.width;
        width = l.width;
        break;
      case Layer::Kind::Residual:
        ll.out_dim = width;
        ll.size = width * width + width;
        break;
      case Layer::Kind::Dropout:
        ll.out_dim = width;
        ll.size = 0;
        break;
      case Layer::Kind::GaussianOutput:
        ll.out_dim = 2;
        ll.size = 2 * width + 2;
        break;
      case Layer::Kind::ScalarOutput:
        ll.out_dim = 1;
        ll.size = width + 1;
        break;
    }
    offset += ll.size;
    table.push_back(ll);
  }
  return table;
}

}  // namespace detail

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Network {
  NetworkSpec spec;
  Vector theta;
  std::vector<detail::LayerLayout> layout;
  // power-iteration warm starts for spectrally bounded layers
  std::vector<Vector> sn_warm;

  Eigen::Index n_params() const { return theta.size(); }

  Eigen::Map<const RowMajorMatrix> weight(size_t layer) const {
    const auto& ll = layout[layer];
    return {theta.data() + ll.offset, rows_of(layer), ll.in_dim};
  }
  Eigen::Map<RowMajorMatrix> weight(size_t layer) {
    const auto& ll = layout[layer];
    return {theta.data() + ll.offset, rows_of(layer), ll.in_dim};
  }
  Eigen::Map<const Vector> bias(size_t layer) const {
    const auto& ll = layout[layer];
    const Eigen::Index r = rows_of(layer);
    return {theta.data() + ll.offset + r * ll.in_dim, r};
  }
  Eigen::Map<Vector> bias(size_t layer) {
    const auto& ll = layout[layer];
    const Eigen::Index r = rows_of(layer);
    return {theta.data() + ll.offset + r * ll.in_dim, r};
  }

 private:
  // weight row count for the dense-like part of a layer (GaussianOutput keeps
  // its two heads stacked: row 0 = mean head, row 1 = variance head)
  Eigen::Index rows_of(size_t layer) const {
    switch (spec.layers[layer].kind) {
      case Layer::Kind::Dense:
      case Layer::Kind::SpectralDense: return spec.layers[layer].width;
      case Layer::Kind::Residual: return layout[layer].in_dim;
      case Layer::Kind::GaussianOutput: return 2;
      case Layer::Kind::ScalarOutput: return 1;
      case Layer::Kind::Dropout: return 0;
    }
    return 0;
  }
};

// Fresh network with He-uniform init for relu layers and Xavier-uniform
// otherwise; biases start at zero.
inline Network make_network(const NetworkSpec& spec, Rng& rng, bool require_output = true) {
  detail::validate_spec(spec, require_output);
  Network net;
  net.spec = spec;
  net.layout = detail::make_layout(spec);
  Eigen::Index total = 0;
  for (const auto& ll : net.layout) total += ll.size;
  net.theta = Vector::Zero(total);
  net.sn_warm.assign(spec.layers.size(), Vector());
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const Layer& l = spec.layers[i];
    if (net.layout[i].size == 0) continue;
    auto w = net.weight(i);
    const double fan_in = static_cast<double>(net.layout[i].in_dim);
    const double fan_out = static_cast<double>(w.rows());
    const bool he = (l.kind != Layer::Kind::GaussianOutput && l.kind != Layer::Kind::ScalarOutput &&
                     l.activation == Activation::Relu);
    const double limit = he ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class ForwardKind { Train, Eval, EvalWithDropout };

struct NetOutput {
  double mean = 0.0;
  double variance = 0.0;
  bool has_variance = false;
};

namespace detail {

constexpr double kVarianceFloor = 1e-6;

inline double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerTrace {
  Vector input;
  Vector preact;  // z for dense-like layers; (mu, raw_var) for GaussianOutput
  Vector mask;    // scaled dropout mask
};

struct Trace {
  std::vector<LayerTrace> layers;
  NetOutput out;
};

inline NetOutput forward_impl(const Network& net, const Eigen::Ref<const Vector>& x,
                              ForwardKind kind, Rng* rng, Trace* trace, bool stop_before_output,
                              Vector* features_out) {
  if (x.size() != net.spec.input_dim) throw DimensionError("forward: input dimension mismatch");
  const bool dropout_active = kind != ForwardKind::Eval;
  if (trace != nullptr) trace->layers.resize(net.spec.layers.size());
  Vector h = x;
  NetOutput out;
  for (size_t i = 0; i < net.spec.layers.size(); ++i) {
    const Layer& l = net.spec.layers[i];
    if (stop_before_output && l.is_output()) break;
    LayerTrace* lt = trace != nullptr ? &trace->layers[i] : nullptr;
    if (lt != nullptr) lt->input = h;
    switch (l.kind) {
      case Layer::Kind::Dense:
      case Layer::Kind::SpectralDense: {
        Vector z = net.weight(i) * h + net.bias(i);
        if (lt != nullptr) lt->preact = z;
        for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = activate(l.activation, z(k));
        h = std::move(z);
        break;
      }
      case Layer::Kind::Residual: {
        Vector z = net.weight(i) * h + net.bias(i);
        if (lt != nullptr) lt->preact = z;
        for (Eigen::Index k = 0; k < z.size(); ++k) h(k) += activate(l.activation, z(k));
        break;
      }
      case Layer::Kind::Dropout: {
        if (dropout_active) {
          if (rng == nullptr)
            throw std::invalid_argument("forward: dropout needs an Rng in this mode");
          const double keep = 1.0 - l.rate;
          Vector mask(h.size());
          for (Eigen::Index k = 0; k < h.size(); ++k)
            mask(k) = rng->uniform() < keep ? 1.0 / keep : 0.0;
          h = h.cwiseProduct(mask);
          if (lt != nullptr) lt->mask = std::move(mask);
        } else if (lt != nullptr) {
          lt->mask = Vector::Ones(h.size());
        }
        break;
      }
      case Layer::Kind::GaussianOutput: {
        const auto w = net.weight(i);
        const auto b = net.bias(i);
        const double mu = w.row(0).dot(h) + b(0);
        const double raw = w.row(1).dot(h) + b(1);
        if (lt != nullptr) {
          lt->preact = Vector(2);
          lt->preact << mu, raw;
        }
        out.mean = mu;
        out.variance = softplus(raw) + kVarianceFloor;
        out.has_variance = true;
        break;
      }
      case Layer::Kind::ScalarOutput: {
        out.mean = net.weight(i).row(0).dot(h) + net.bias(i)(0);
        out.has_variance = false;
        break;
      }
    }
  }
  if (features_out != nullptr) *features_out = h;
  if (trace != nullptr) trace->out = out;
  return out;
}

// Reverse pass. d_mean / d_var are the loss derivatives with respect to the
// network outputs; parameter gradients accumulate into grad. When
// d_feature_seed is given the pass instead starts from a gradient on the
// final hidden activations (features), for traces recorded with
// stop_before_output.
inline void backward_impl(const Network& net, const Trace& trace, double d_mean, double d_var,
                          Vector& grad, Vector* d_input,
                          const Vector* d_feature_seed = nullptr) {
  Vector d_h;  // gradient w.r.t. the activation flowing out of the current layer
  bool d_h_ready = false;
  if (d_feature_seed != nullptr) {
    d_h = *d_feature_seed;
    d_h_ready = true;
  }
  for (size_t ii = net.spec.layers.size(); ii-- > 0;) {
    const Layer& l = net.spec.layers[ii];
    const auto& lt = trace.layers[ii];
    const auto& ll = net.layout[ii];
    if (lt.input.size() == 0) continue;  // layer not reached (features pass)
    switch (l.kind) {
      case Layer::Kind::GaussianOutput: {
        const double raw = lt.preact(1);
        const double d_raw = d_var * sigmoid(raw);
        auto w = net.weight(ii);
        Eigen::Map<RowMajorMatrix> gw(grad.data() + ll.offset, 2, ll.in_dim);
        Eigen::Map<Vector> gb(grad.data() + ll.offset + 2 * ll.in_dim, 2);
        gw.row(0) += d_mean * lt.input.transpose();
        gw.row(1) += d_raw * lt.input.transpose();
        gb(0) += d_mean;
        gb(1) += d_raw;
        d_h = d_mean * w.row(0).transpose() + d_raw * w.row(1).transpose();
        d_h_ready = true;
        break;
      }
      case Layer::Kind::ScalarOutput: {
        auto w = net.weight(ii);
        Eigen::Map<RowMajorMatrix> gw(grad.data() + ll.offset, 1, ll.in_dim);
        grad(ll.offset + ll.in_dim) += d_mean;
        gw.row(0) += d_mean * lt.input.transpose();
        d_h = d_mean * w.row(0).transpose();
        d_h_ready = true;
        break;
      }
      case Layer::Kind::Dropout: {
        if (!d_h_ready) continue;
        d_h = d_h.cwiseProduct(lt.mask);
        break;
      }
      case Layer::Kind::Dense:
      case Layer::Kind::SpectralDense: {
        if (!d_h_ready) continue;
        Vector d_z(d_h.size());
        for (Eigen::Index k = 0; k < d_z.size(); ++k)
          d_z(k) = d_h(k) * activate_grad(l.activation, lt.preact(k));
        Eigen::Map<RowMajorMatrix> gw(grad.data() + ll.offset, d_z.size(), ll.in_dim);
        Eigen::Map<Vector> gb(grad.data() + ll.offset + d_z.size() * ll.in_dim, d_z.size());
        gw += d_z * lt.input.transpose();
        gb += d_z;
        d_h = net.weight(ii).transpose() * d_z;
        break;
      }
      case Layer::Kind::Residual: {
        if (!d_h_ready) continue;
        Vector d_z(d_h.size());
        for (Eigen::Index k = 0; k < d_z.size(); ++k)
          d_z(k) = d_h(k) * activate_grad(l.activation, lt.preact(k));
        Eigen::Map<RowMajorMatrix> gw(grad.data() + ll.offset, d_z.size(), ll.in_dim);
        Eigen::Map<Vector> gb(grad.data() + ll.offset + d_z.size() * ll.in_dim, d_z.size());
        gw += d_z * lt.input.transpose();
        gb += d_z;
        d_h = d_h + net.weight(ii).transpose() * d_z;
        break;
      }
    }
  }
  if (d_input != nullptr && d_h_ready) *d_input = d_h;
}

}  // namespace detail

inline NetOutput forward(const Network& net, const Eigen::Ref<const Vector>& x, ForwardKind kind,
                         Rng* rng = nullptr) {
  detail::validate_spec(net.spec, /*require_output=*/true);
  return detail::forward_impl(net, x, kind, rng, nullptr, false, nullptr);
}

// Activations after the last hidden layer (the feature map h_nn); for
// networks with a terminal output layer the pass stops just before it.
inline Vector features(const Network& net, const Eigen::Ref<const Vector>& x,
                       ForwardKind kind = ForwardKind::Eval, Rng* rng = nullptr) {
  Vector h;
  detail::forward_impl(net, x, kind, rng, nullptr, /*stop_before_output=*/true, &h);
  return h;
}

inline Matrix features_matrix(const Network& net, const Matrix& x) {
  Matrix out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector h = features(net, x.row(i).transpose());
    if (i == 0) out.resize(x.rows(), h.size());
    out.row(i) = h.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

enum class LossKind { Mse, Nll };

// Loss over a batch plus the full parameter gradient. MSE is the batch mean
// of squared errors; NLL is the summed Gaussian negative log-likelihood
// (constant omitted) and requires a Gaussian output layer. `mode` controls
// dropout; rng must be supplied when dropout is active.
inline double loss_and_grad(const Network& net, const Matrix& x, const Vector& y, LossKind loss,
                            Vector& grad, ForwardKind mode = ForwardKind::Eval,
                            Rng* rng = nullptr) {
  if (x.rows() == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (x.rows() != y.size()) throw DimensionError("loss_and_grad: X/y size mismatch");
  detail::validate_spec(net.spec, true);
  const bool gaussian = net.spec.layers.back().kind == Layer::Kind::GaussianOutput;
  if (loss == LossKind::Nll && !gaussian)
    throw std::invalid_argument("loss_and_grad: NLL needs a Gaussian output layer");
  grad = Vector::Zero(net.n_params());
  const double batch = static_cast<double>(x.rows());
  double total = 0.0;
  detail::Trace trace;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const NetOutput out = detail::forward_impl(net, x.row(i).transpose(), mode, rng, &trace,
                                               false, nullptr);
    double d_mean = 0.0, d_var = 0.0;
    if (loss == LossKind::Mse) {
      const double r = out.mean - y(i);
      total += r * r / batch;
      d_mean = 2.0 * r / batch;
    } else {
      const double r = y(i) - out.mean;
      const double v = out.variance;
      total += 0.5 * std::log(v) + r * r / (2.0 * v);
      d_mean = -r / v;
      d_var = 0.5 / v - r * r / (2.0 * v * v);
    }
    detail::backward_impl(net, trace, d_mean, d_var, grad, nullptr);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Spectral normalization: rescale every spectrally bounded weight whose norm
// exceeds its bound gamma to gamma * W / ||W||_2; layers under the bound are
// untouched. The normalization factor is frozen between calls, so gradients
// treat the effective weights as plain parameters.
inline void spectral_normalize(Network& net) {
  for (size_t i = 0; i < net.spec.layers.size(); ++i) {
    const Layer& l = net.spec.layers[i];
    if (!l.has_spectral_bound()) continue;
    auto w = net.weight(i);
    Matrix wm = w;
    for (int attempt = 0; attempt < 6; ++attempt) {
      const Vector* warm = net.sn_warm[i].size() == wm.cols() ? &net.sn_warm[i] : nullptr;
      const SpectralEstimate est = power_iteration(wm, 300, 1e-12, nullptr, warm);
      net.sn_warm[i] = est.right;
      if (est.sigma <= l.gamma * (1.0 + 5e-4)) break;
      wm *= l.gamma / est.sigma;
    }
    w = wm;
  }
}

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  LossKind loss = LossKind::Mse;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  Network net;
  std::vector<double> loss_history;  // full-dataset loss, entry 0 = before training
};

inline TrainResult train(Network net, const Matrix& x, const Vector& y, const TrainConfig& cfg) {
  if (x.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (x.rows() != y.size()) throw DimensionError("train: X/y size mismatch");
  detail::validate_spec(net.spec, true);
  if (!(cfg.learning_rate >= 0.0) || cfg.epochs < 0)
    throw std::invalid_argument("train: invalid config");
  const bool has_spectral = [&] {
    for (const auto& l : net.spec.layers)
      if (l.has_spectral_bound()) return true;
    return false;
  }();

  Rng rng(cfg.seed);
  Vector grad(net.n_params());
  Vector adam_m = Vector::Zero(net.n_params());
  Vector adam_v = Vector::Zero(net.n_params());
  long adam_t = 0;

  const Eigen::Index n = x.rows();
  const Eigen::Index batch = cfg.batch_size > 0 ? std::min<Eigen::Index>(cfg.batch_size, n) : n;
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  Vector eval_grad(net.n_params());
  result.loss_history.push_back(loss_and_grad(net, x, y, cfg.loss, eval_grad));

  Matrix xb(batch, x.cols());
  Vector yb(batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle driven by the config seed
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform() * double(i + 1));
      std::swap(order[i], order[static_cast<size_t>(std::min(j, i))]);
    }
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.row(k) = x.row(order[start + k]);
        yb(k) = y(order[start + k]);
      }
      const double batch_loss = loss_and_grad(net, xb.topRows(len), yb.head(len), cfg.loss, grad,
                                              ForwardKind::Train, &rng);
      if (!std::isfinite(batch_loss)) throw DivergenceError(epoch);
      if (cfg.optimizer == Optimizer::Sgd) {
        net.theta -= cfg.learning_rate * grad;
      } else {
        ++adam_t;
        adam_m = cfg.adam_beta1 * adam_m + (1.0 - cfg.adam_beta1) * grad;
        adam_v = cfg.adam_beta2 * adam_v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(adam_t));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(adam_t));
        net.theta -= (cfg.learning_rate / bc1) *
                     (adam_m.array() / ((adam_v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
      }
      if (has_spectral) spectral_normalize(net);
    }
    const double epoch_loss = loss_and_grad(net, x, y, cfg.loss, eval_grad);
    if (!std::isfinite(epoch_loss)) throw DivergenceError(epoch);
    result.loss_history.push_back(epoch_loss);
  }
  result.net = std::move(net);
  return result;
}

// ---------------------------------------------------------------------------
// Presets

namespace presets {

// Stem dense layer followed by residual blocks, optional per-block dropout,
// and the chosen output head. gamma > 0 makes every hidden weight
// spectrally bounded (stem becomes SpectralDense, blocks carry the bound).
inline NetworkSpec resnet(int input_dim, int width, int blocks, Activation act,
                          double dropout_rate, double gamma, bool gaussian_output) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  if (gamma > 0.0) {
    spec.layers.push_back(Layer::spectral_dense(width, act, gamma));
  } else {
    spec.layers.push_back(Layer::dense(width, act));
  }
  for (int i = 0; i < blocks; ++i) {
    spec.layers.push_back(Layer::residual(width, act, gamma));
    if (dropout_rate > 0.0) spec.layers.push_back(Layer::dropout(dropout_rate));
  }
  spec.layers.push_back(gaussian_output ? Layer::gaussian_output() : Layer::scalar_output());
  return spec;
}

// Wide Gaussian-output MLP (100-50-50-50-50-10 hidden widths). Activation
// defaults to relu.
inline NetworkSpec wide_gaussian_mlp(int input_dim, Activation act = Activation::Relu) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  for (int w : {100, 50, 50, 50, 50, 10}) spec.layers.push_back(Layer::dense(w, act));
  spec.layers.push_back(Layer::gaussian_output());
  return spec;
}

}  // namespace presets

// ---------------------------------------------------------------------------
// Serialization: spec plus the flat theta vector.

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + s);
}

inline nlohmann::json network_spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : spec.layers) {
    nlohmann::json jl;
    switch (l.kind) {
      case Layer::Kind::Dense:
        jl = {{"kind", "dense"}, {"width", l.width}, {"activation", activation_name(l.activation)}};
        break;
      case Layer::Kind::Residual:
        jl = {{"kind", "residual"},
              {"width", l.width},
              {"activation", activation_name(l.activation)}};
        if (l.gamma > 0.0) jl["gamma"] = l.gamma;
        break;
      case Layer::Kind::Dropout:
        jl = {{"kind", "dropout"}, {"rate", l.rate}};
        break;
      case Layer::Kind::SpectralDense:
        jl = {{"kind", "spectral_dense"},
              {"width", l.width},
              {"activation", activation_name(l.activation)},
              {"gamma", l.gamma}};
        break;
      case Layer::Kind::GaussianOutput: jl = {{"kind", "gaussian_output"}}; break;
      case Layer::Kind::ScalarOutput: jl = {{"kind", "scalar_output"}}; break;
    }
    layers.push_back(jl);
  }
  return {{"input_dim", spec.input_dim}, {"layers", layers}};
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  for (const auto& jl : j.at("layers")) {
    const std::string kind = jl.at("kind").get<std::string>();
    if (kind == "dense") {
      spec.layers.push_back(Layer::dense(jl.at("width").get<int>(),
                                         activation_from_name(jl.at("activation"))));
    } else if (kind == "residual") {
      spec.layers.push_back(Layer::residual(jl.at("width").get<int>(),
                                            activation_from_name(jl.at("activation")),
                                            jl.value("gamma", 0.0)));
    } else if (kind == "dropout") {
      spec.layers.push_back(Layer::dropout(jl.at("rate").get<double>()));
    } else if (kind == "spectral_dense") {
      spec.layers.push_back(Layer::spectral_dense(jl.at("width").get<int>(),
                                                  activation_from_name(jl.at("activation")),
                                                  jl.at("gamma").get<double>()));
    } else if (kind == "gaussian_output") {
      spec.layers.push_back(Layer::gaussian_output());
    } else if (kind == "scalar_output") {
      spec.layers.push_back(Layer::scalar_output());
    } else {
      throw std::invalid_argument("unknown layer kind: " + kind);
    }
  }
  return spec;
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["spec"] = network_spec_to_json(net.spec);
  j["theta"] = std::vector<double>(net.theta.data(), net.theta.data() + net.theta.size());
  return j;
}

inline Network network_from_json(const nlohmann::json& j, bool require_output = true) {
  const NetworkSpec spec = network_spec_from_json(j.at("spec"));
  detail::validate_spec(spec, require_output);
  Network net;
  net.spec = spec;
  net.layout = detail::make_layout(spec);
  net.sn_warm.assign(spec.layers.size(), Vector());
  const auto theta = j.at("theta").get<std::vector<double>>();
  Eigen::Index total = 0;
  for (const auto& ll : net.layout) total += ll.size;
  if (static_cast<Eigen::Index>(theta.size()) != total)
    throw std::invalid_argument("network_from_json: theta length does not match the spec layout");
  net.theta = Eigen::Map<const Vector>(theta.data(), total);
  return net;
}

}  // namespace uqkit
