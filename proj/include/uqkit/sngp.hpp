#pragma once

// Distance-aware deterministic UQ.
//
// SNGP: a spectral-normalized residual feature extractor followed by a
// random-Fourier-feature Gaussian process head. The head is a Bayesian
// linear model in the feature space phi(h) = sigma_f sqrt(2/m) cos(Omega h + b)
// with Omega rows ~ N(0, I / l^2) and phases ~ U[0, 2 pi), whose inner
// products approximate the squared exponential kernel. After extractor
// training, one exact pass over the full training set sets the Laplace
// precision P = I + (1/noise^2) sum_i phi_i phi_i^T (the identity term is the
// unit-Gaussian prior on the output weights) and resolves the output weights
// to the posterior mode beta = (1/noise^2) P^{-1} Phi^T y.
//
// DNN-GPR: exact GPR on the learned features of a trained extractor (deep
// kernel), no spectral normalization required.

#include "uqkit/gpr.hpp"
#include "uqkit/kernels.hpp"
#include "uqkit/nnet.hpp"
#include "uqkit/numerics.hpp"
#include "uqkit/prediction.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace uqkit {

struct RffHead {
  Matrix omega;        // m x H, frozen at construction
  Vector phase;        // m, frozen at construction
  Vector beta;         // m output weights
  Matrix prec_chol;    // lower Cholesky factor of the precision P
  double sigma_f = 1.0;
  double length_scale = 1.0;
  double noise_std = 0.1;

  Eigen::Index n_features() const { return omega.rows(); }
  Eigen::Index feature_dim() const { return omega.cols(); }
};

inline RffHead make_rff_head(Eigen::Index m, Eigen::Index feature_dim, double sigma_f,
                             double length_scale, double noise_std, Rng& rng) {
  if (m < 1) throw std::invalid_argument("make_rff_head: need at least one feature");
  if (!(sigma_f > 0.0) || !(length_scale > 0.0) || !(noise_std > 0.0))
    throw std::invalid_argument("make_rff_head: hyperparameters must be positive");
  RffHead head;
  head.sigma_f = sigma_f;
  head.length_scale = length_scale;
  head.noise_std = noise_std;
  head.omega.resize(m, feature_dim);
  for (Eigen::Index i = 0; i < m; ++i)
    head.omega.row(i) = (rng.normal_vector(feature_dim) / length_scale).transpose();
  head.phase.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) head.phase(i) = rng.uniform(0.0, 2.0 * M_PI);
  head.beta = Vector::Zero(m);
  head.prec_chol = Matrix::Identity(m, m);
  return head;
}

inline Vector rff_features(const RffHead& head, const Eigen::Ref<const Vector>& h) {
  if (h.size() != head.feature_dim()) throw DimensionError("rff_features: dimension mismatch");
  const double scale = head.sigma_f * std::sqrt(2.0 / double(head.n_features()));
  return (scale * ((head.omega * h + head.phase).array().cos())).matrix();
}

struct SngpModel {
  Network extractor;  // spectral-normalized residual network, no output layer
  RffHead head;
};

struct SngpFitOptions {
  Eigen::Index rff_features = 1024;
  double sigma_f = 1.0;
  double length_scale = 0.0;  // <= 0: median pairwise feature distance at fit time
  double noise_std = 0.1;
  // Covariance estimation: negative runs the exact full-set pass (default and
  // recommended); a value in (0, 1) replaces it with an exponential moving
  // average of per-batch precision estimates under that momentum.
  double cov_momentum = -1.0;
  Eigen::Index cov_batch = 64;
  TrainConfig train;  // extractor + beta joint training (MSE)
};

namespace detail {

inline void validate_extractor_spec(const NetworkSpec& spec) {
  validate_spec(spec, /*require_output=*/false);
  if (spec.has_output_layer())
    throw std::invalid_argument("sngp: the extractor must not carry an output layer");
  bool has_residual = false;
  for (const Layer& l : spec.layers) {
    if (l.kind == Layer::Kind::Residual) has_residual = true;
    if ((l.kind == Layer::Kind::Dense))
      throw std::invalid_argument("sngp: extractor hidden layers must be spectrally bounded");
    if ((l.kind == Layer::Kind::SpectralDense || l.kind == Layer::Kind::Residual) &&
        !(l.gamma > 0.0))
      throw std::invalid_argument("sngp: extractor layers need a spectral bound");
  }
  if (!has_residual)
    throw std::invalid_argument("sngp: extractor needs at least one residual block");
}

inline double median_pairwise_distance(const Matrix& rows) {
  std::vector<double> d;
  const Eigen::Index n = std::min<Eigen::Index>(rows.rows(), 256);
  d.reserve(static_cast<size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((rows.row(i) - rows.row(j)).norm());
  if (d.empty()) return 1.0;
  const size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  return d[mid] > 0.0 ? d[mid] : 1.0;
}

// Covariance pass over the full training set, then
// beta = (1/s^2) P^{-1} Phi^T y (the Laplace posterior mode). Exact mode sets
// P = I + (1/s^2) Phi^T Phi; momentum mode replaces it with an exponential
// moving average of per-batch precision estimates rescaled to the full set.
inline void laplace_pass(SngpModel& model, const Matrix& x, const Vector& y,
                         double cov_momentum, Eigen::Index cov_batch) {
  const Eigen::Index m = model.head.n_features();
  const Eigen::Index n = x.rows();
  Matrix p = Matrix::Identity(m, m);
  Vector phi_t_y = Vector::Zero(m);
  const double inv_s2 = 1.0 / (model.head.noise_std * model.head.noise_std);
  if (n > 0) {
    Matrix phi(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector h = features(model.extractor, x.row(i).transpose());
      phi.row(i) = rff_features(model.head, h).transpose();
    }
    if (cov_momentum < 0.0) {
      p.noalias() += inv_s2 * phi.transpose() * phi;
    } else {
      if (!(cov_momentum < 1.0))
        throw std::invalid_argument("sngp: cov_momentum must be negative (exact) or in [0, 1)");
      const Eigen::Index batch = std::max<Eigen::Index>(1, std::min(cov_batch, n));
      for (Eigen::Index start = 0; start < n; start += batch) {
        const Eigen::Index len = std::min(batch, n - start);
        Matrix p_batch = Matrix::Identity(m, m);
        p_batch.noalias() += (inv_s2 * double(n) / double(len)) *
                             phi.middleRows(start, len).transpose() * phi.middleRows(start, len);
        p = cov_momentum * p + (1.0 - cov_momentum) * p_batch;
      }
    }
    phi_t_y.noalias() = phi.transpose() * y;
  }
  model.head.prec_chol = cholesky(p);
  if (n > 0) {
    const Vector tmp = tri_solve(model.head.prec_chol, inv_s2 * phi_t_y, false);
    model.head.beta = tri_solve(model.head.prec_chol, tmp, true);
  } else {
    model.head.beta = Vector::Zero(m);
  }
}

}  // namespace detail

// Fit from an already-constructed extractor (weights as provided). The rng
// drives the random-feature construction and training shuffles only.
inline SngpModel sngp_fit_from(Network extractor, const Matrix& x, const Vector& y,
                               const SngpFitOptions& opt, Rng& rng) {
  detail::validate_extractor_spec(extractor.spec);

  SngpModel model;
  model.extractor = std::move(extractor);
  spectral_normalize(model.extractor);
  const NetworkSpec& spec = model.extractor.spec;

  // feature dimension after the extractor
  const Vector h0 = x.rows() > 0 ? features(model.extractor, x.row(0).transpose())
                                 : features(model.extractor, Vector::Zero(spec.input_dim));
  double length_scale = opt.length_scale;
  if (!(length_scale > 0.0)) {
    Matrix feats(std::min<Eigen::Index>(x.rows(), 256), h0.size());
    for (Eigen::Index i = 0; i < feats.rows(); ++i)
      feats.row(i) = features(model.extractor, x.row(i).transpose()).transpose();
    length_scale = x.rows() > 1 ? detail::median_pairwise_distance(feats) : 1.0;
  }
  Rng head_rng = rng.child(1);
  model.head = make_rff_head(opt.rff_features, h0.size(), opt.sigma_f, length_scale,
                             opt.noise_std, head_rng);

  // Joint MSE training of extractor and output weights; the projection after
  // every step keeps the spectral bounds tight.
  if (x.rows() > 0 && opt.train.epochs > 0) {
    Rng train_rng(opt.train.seed);
    const Eigen::Index n = x.rows();
    const Eigen::Index batch =
        opt.train.batch_size > 0 ? std::min<Eigen::Index>(opt.train.batch_size, n) : n;
    std::vector<Eigen::Index> order(n);
    for (Eigen::Index i = 0; i < n; ++i) order[i] = i;

    const Eigen::Index n_net = model.extractor.n_params();
    const Eigen::Index m = model.head.n_features();
    Vector adam_m = Vector::Zero(n_net + m), adam_v = Vector::Zero(n_net + m);
    long adam_t = 0;
    Vector grad(n_net + m);
    const double scale = model.head.sigma_f * std::sqrt(2.0 / double(m));

    for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
      for (Eigen::Index i = n - 1; i > 0; --i) {
        const Eigen::Index j =
            static_cast<Eigen::Index>(train_rng.uniform() * double(i + 1));
        std::swap(order[i], order[static_cast<size_t>(std::min(j, i))]);
      }
      for (Eigen::Index start = 0; start < n; start += batch) {
        const Eigen::Index len = std::min(batch, n - start);
        grad.setZero();
        double batch_loss = 0.0;
        for (Eigen::Index k = 0; k < len; ++k) {
          const Eigen::Index idx = order[start + k];
          detail::Trace trace;
          Vector h;
          detail::forward_impl(model.extractor, x.row(idx).transpose(), ForwardKind::Train,
                               &train_rng, &trace, true, &h);
          const Vector arg = model.head.omega * h + model.head.phase;
          const Vector phi = (scale * arg.array().cos()).matrix();
          const double pred = model.head.beta.dot(phi);
          const double r = pred - y(idx);
          batch_loss += r * r / double(len);
          const double d_pred = 2.0 * r / double(len);
          // output weights
          grad.tail(m) += d_pred * phi;
          // chain through the cosine features into the extractor
          const Vector d_phi = d_pred * model.head.beta;
          const Vector d_arg = (-scale * arg.array().sin() * d_phi.array()).matrix();
          const Vector d_h = model.head.omega.transpose() * d_arg;
          Vector net_grad = Vector::Zero(n_net);
          detail::backward_impl(model.extractor, trace, 0.0, 0.0, net_grad, nullptr, &d_h);
          grad.head(n_net) += net_grad;
        }
        if (!std::isfinite(batch_loss)) throw DivergenceError(epoch, "sngp");
        ++adam_t;
        adam_m = 0.9 * adam_m + 0.1 * grad;
        adam_v = 0.999 * adam_v + 0.001 * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(0.9, double(adam_t));
        const double bc2 = 1.0 - std::pow(0.999, double(adam_t));
        const Vector step = (opt.train.learning_rate / bc1) *
                            (adam_m.array() / ((adam_v.array() / bc2).sqrt() + 1e-8)).matrix();
        model.extractor.theta -= step.head(n_net);
        model.head.beta -= step.tail(m);
        spectral_normalize(model.extractor);
      }
    }
  }

  detail::laplace_pass(model, x, y, opt.cov_momentum, opt.cov_batch);
  return model;
}

inline SngpModel sngp_fit(const NetworkSpec& extractor_spec, const Matrix& x, const Vector& y,
                          double gamma, const SngpFitOptions& opt, Rng& rng) {
  NetworkSpec spec = extractor_spec;
  // a single shared spectral norm bound across all hidden layers
  for (Layer& l : spec.layers)
    if (l.kind == Layer::Kind::SpectralDense || l.kind == Layer::Kind::Residual) l.gamma = gamma;
  detail::validate_extractor_spec(spec);
  Rng init_rng = rng.child(0);
  Network extractor = make_network(spec, init_rng, /*require_output=*/false);
  return sngp_fit_from(std::move(extractor), x, y, opt, rng);
}

// mean = beta . phi; epistemic variance = phi^T P^{-1} phi; aleatory = noise^2.
inline GaussianPrediction sngp_predict(const SngpModel& model,
                                       const Eigen::Ref<const Vector>& x) {
  const Vector h = features(model.extractor, x);
  const Vector phi = rff_features(model.head, h);
  const double mean = model.head.beta.dot(phi);
  const Vector z = tri_solve(model.head.prec_chol, phi, false);
  const double epistemic = z.squaredNorm();
  const double s2 = model.head.noise_std * model.head.noise_std;
  return GaussianPrediction::from_split(mean, s2, epistemic);
}

// ---------------------------------------------------------------------------
// DNN-GPR: exact GPR on the features of a trained extractor network. The
// extractor may be any network (features are the pre-output activations).

struct DnnGprModel {
  Network extractor;
  GpModel gp;
};

inline DnnGprModel dnn_gpr_fit(const Network& extractor, const Matrix& x, const Vector& y,
                               const KernelSpec& kernel, const GpFitOptions& opt, Rng& rng) {
  DnnGprModel model;
  model.extractor = extractor;
  const Matrix feats = features_matrix(extractor, x);
  model.gp = gp_fit(feats, y, kernel, opt, rng);
  return model;
}

inline Predictions dnn_gpr_predict(const DnnGprModel& model, const Matrix& x,
                                   bool include_noise) {
  const Matrix feats = features_matrix(model.extractor, x);
  return gp_predict(model.gp, feats, include_noise);
}

// ---------------------------------------------------------------------------
// Serialization: extractor JSON plus the head arrays in one bundle.

inline nlohmann::json sngp_to_json(const SngpModel& model) {
  nlohmann::json j;
  j["extractor"] = network_to_json(model.extractor);
  nlohmann::json h;
  h["sigma_f"] = model.head.sigma_f;
  h["length_scale"] = model.head.length_scale;
  h["noise_std"] = model.head.noise_std;
  auto mat_to_json = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
      rows.push_back(row);
    }
    return rows;
  };
  h["omega"] = mat_to_json(model.head.omega);
  h["phase"] = std::vector<double>(model.head.phase.data(),
                                   model.head.phase.data() + model.head.phase.size());
  h["beta"] = std::vector<double>(model.head.beta.data(),
                                  model.head.beta.data() + model.head.beta.size());
  h["prec_chol"] = mat_to_json(model.head.prec_chol);
  j["head"] = h;
  return j;
}

inline SngpModel sngp_from_json(const nlohmann::json& j) {
  SngpModel model;
  model.extractor = network_from_json(j.at("extractor"), /*require_output=*/false);
  const auto& h = j.at("head");
  model.head.sigma_f = h.at("sigma_f").get<double>();
  model.head.length_scale = h.at("length_scale").get<double>();
  model.head.noise_std = h.at("noise_std").get<double>();
  auto mat_from_json = [](const nlohmann::json& rows) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index k = 0; k < c; ++k) m(i, k) = rows.at(i).at(k).get<double>();
    return m;
  };
  model.head.omega = mat_from_json(h.at("omega"));
  const auto phase = h.at("phase").get<std::vector<double>>();
  model.head.phase = Eigen::Map<const Vector>(phase.data(), static_cast<Eigen::Index>(phase.size()));
  const auto beta = h.at("beta").get<std::vector<double>>();
  model.head.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  model.head.prec_chol = mat_from_json(h.at("prec_chol"));
  return model;
}

}  // namespace uqkit
