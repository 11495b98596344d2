#pragma once

// Bayesian posterior machinery over network parameters: log-posterior
// evaluation with gradients, Metropolis-Hastings sampling, mean-field
// variational inference (reparameterized ELBO ascent), Stein variational
// gradient descent, MC-dropout prediction, and posterior-predictive
// aggregation.

#include "uqkit/nnet.hpp"
#include "uqkit/numerics.hpp"
#include "uqkit/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace uqkit {

// ---------------------------------------------------------------------------
// Log posterior: Gaussian likelihood (fixed noise std) plus an isotropic
// Gaussian prior over the parameters. The model is any differentiable map
// f(x; theta); network-backed construction is the production path, while the
// generic constructor lets tests and samplers target crafted densities.

class LogPosterior {
 public:
  // f(x, theta, grad): returns the prediction, and when grad != nullptr adds
  // d f / d theta into it (grad arrives zeroed per sample).
  using ModelFn =
      std::function<double(const Eigen::Ref<const Vector>&, const Vector&, Vector*)>;

  LogPosterior(ModelFn model, Eigen::Index dim, Matrix x, Vector y, double prior_std,
               double noise_std)
      : model_(std::move(model)),
        dim_(dim),
        x_(std::move(x)),
        y_(std::move(y)),
        prior_std_(prior_std),
        noise_std_(noise_std) {
    if (x_.rows() != y_.size()) throw DimensionError("LogPosterior: X/y size mismatch");
    if (!(prior_std_ > 0.0)) throw std::invalid_argument("LogPosterior: prior_std must be > 0");
    if (!(noise_std_ > 0.0)) throw std::invalid_argument("LogPosterior: noise_std must be > 0");
  }

  // Scalar-output network over flat parameters theta.
  static LogPosterior for_network(const NetworkSpec& spec, Matrix x, Vector y, double prior_std,
                                  double noise_std) {
    detail::validate_spec(spec, true);
    if (spec.layers.back().kind != Layer::Kind::ScalarOutput)
      throw std::invalid_argument("LogPosterior: expected a scalar-output network");
    Network proto;
    proto.spec = spec;
    proto.layout = detail::make_layout(spec);
    proto.sn_warm.assign(spec.layers.size(), Vector());
    Eigen::Index total = 0;
    for (const auto& ll : proto.layout) total += ll.size;
    proto.theta = Vector::Zero(total);
    ModelFn fn = [proto](const Eigen::Ref<const Vector>& xi, const Vector& theta,
                         Vector* grad) mutable -> double {
      proto.theta = theta;
      if (grad == nullptr) {
        return detail::forward_impl(proto, xi, ForwardKind::Eval, nullptr, nullptr, false, nullptr)
            .mean;
      }
      detail::Trace trace;
      const NetOutput out =
          detail::forward_impl(proto, xi, ForwardKind::Eval, nullptr, &trace, false, nullptr);
      detail::backward_impl(proto, trace, 1.0, 0.0, *grad, nullptr);
      return out.mean;
    };
    return LogPosterior(std::move(fn), total, std::move(x), std::move(y), prior_std, noise_std);
  }

  Eigen::Index dim() const { return dim_; }
  Eigen::Index n_data() const { return x_.rows(); }
  double noise_std() const { return noise_std_; }
  double prior_std() const { return prior_std_; }

  // log p(y | theta, X); gradient accumulates into *grad when provided.
  double log_likelihood(const Vector& theta, Vector* grad = nullptr) const {
    const double s2 = noise_std_ * noise_std_;
    double sumsq = 0.0;
    Vector model_grad;
    if (grad != nullptr) {
      grad->setZero(dim_);
      model_grad.resize(dim_);
    }
    for (Eigen::Index i = 0; i < x_.rows(); ++i) {
      if (grad != nullptr) model_grad.setZero();
      const double f =
          model_(x_.row(i).transpose(), theta, grad != nullptr ? &model_grad : nullptr);
      const double r = y_(i) - f;
      sumsq += r * r;
      if (grad != nullptr) *grad += (r / s2) * model_grad;
    }
    return -double(x_.rows()) * std::log(std::sqrt(2.0 * M_PI) * noise_std_) -
           sumsq / (2.0 * s2);
  }

  double log_prior(const Vector& theta, Vector* grad = nullptr) const {
    const double p2 = prior_std_ * prior_std_;
    if (grad != nullptr) *grad = -theta / p2;
    return -double(dim_) * std::log(std::sqrt(2.0 * M_PI) * prior_std_) -
           theta.squaredNorm() / (2.0 * p2);
  }

  double value(const Vector& theta) const {
    check_theta(theta);
    return log_likelihood(theta) + log_prior(theta);
  }

  double value_and_grad(const Vector& theta, Vector& grad) const {
    check_theta(theta);
    Vector lik_grad, prior_grad;
    const double lik = log_likelihood(theta, &lik_grad);
    const double prior = log_prior(theta, &prior_grad);
    grad = lik_grad + prior_grad;
    return lik + prior;
  }

  double model_eval(const Eigen::Ref<const Vector>& x, const Vector& theta) const {
    return model_(x, theta, nullptr);
  }

 private:
  void check_theta(const Vector& theta) const {
    if (theta.size() != dim_) throw DimensionError("LogPosterior: theta length mismatch");
  }

  ModelFn model_;
  Eigen::Index dim_;
  Matrix x_;
  Vector y_;
  double prior_std_;
  double noise_std_;
};

// Generic differentiable log-density target for the samplers below.
using LogDensityFn = std::function<double(const Vector&, Vector*)>;

inline LogDensityFn as_log_density(const LogPosterior& lp) {
  return [&lp](const Vector& theta, Vector* grad) -> double {
    if (grad == nullptr) return lp.value(theta);
    return lp.value_and_grad(theta, *grad);
  };
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings with a symmetric isotropic Gaussian proposal.

struct MhOptions {
  bool adapt = false;            // scale the proposal toward the target acceptance
  double target_acceptance = 0.3;
  int adapt_interval = 100;
};

struct MhResult {
  Matrix chain;  // steps x dim, the post-step states
  double acceptance_rate = 0.0;
  double final_proposal_std = 0.0;
};

inline MhResult mh_sample(const LogDensityFn& target, const Vector& theta0, long steps,
                          double proposal_std, Rng& rng, const MhOptions& opt = {}) {
  if (steps < 1) throw std::invalid_argument("mh_sample: steps must be >= 1");
  const Eigen::Index dim = theta0.size();
  MhResult result;
  result.chain.resize(steps, dim);
  Vector current = theta0;
  double log_p = target(current, nullptr);
  long accepted = 0;
  long window_accepted = 0;
  double scale = proposal_std;
  for (long s = 0; s < steps; ++s) {
    Vector proposal = current + scale * rng.normal_vector(dim);
    const double log_p_new = target(proposal, nullptr);
    const double log_u = std::log(std::max(rng.uniform(), 1e-300));
    if (log_p_new - log_p >= log_u) {
      current = std::move(proposal);
      log_p = log_p_new;
      ++accepted;
      ++window_accepted;
    }
    result.chain.row(s) = current.transpose();
    if (opt.adapt && scale > 0.0 && (s + 1) % opt.adapt_interval == 0) {
      const double rate = double(window_accepted) / double(opt.adapt_interval);
      scale *= std::exp(rate - opt.target_acceptance);
      window_accepted = 0;
    }
  }
  result.acceptance_rate = double(accepted) / double(steps);
  result.final_proposal_std = scale;
  return result;
}

// ---------------------------------------------------------------------------
// Mean-field variational inference. The variational family is an independent
// Gaussian per parameter; the ELBO is the reparameterized Monte Carlo
// estimate of the expected log-likelihood minus the analytic KL between the
// variational distribution and the prior.

struct MfviPosterior {
  Vector mu;
  Vector log_sigma;

  Eigen::Index dim() const { return mu.size(); }
  Vector sigma() const { return log_sigma.array().exp(); }

  static MfviPosterior init(Eigen::Index dim, double mu0 = 0.0, double sigma0 = 0.1) {
    MfviPosterior q;
    q.mu = Vector::Constant(dim, mu0);
    q.log_sigma = Vector::Constant(dim, std::log(sigma0));
    return q;
  }

  Vector sample(Rng& rng) const { return mu + sigma().cwiseProduct(rng.normal_vector(dim())); }
};

// KL( N(mu1, diag sigma1^2) || N(mu2, diag sigma2^2) ), elementwise closed form.
inline double kl_diag_gaussians(const Vector& mu1, const Vector& sigma1, const Vector& mu2,
                                const Vector& sigma2) {
  if (mu1.size() != sigma1.size() || mu1.size() != mu2.size() || mu1.size() != sigma2.size())
    throw DimensionError("kl_diag_gaussians: size mismatch");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < mu1.size(); ++k) {
    const double r = sigma1(k) / sigma2(k);
    const double d = (mu1(k) - mu2(k)) / sigma2(k);
    kl += std::log(sigma2(k) / sigma1(k)) + 0.5 * (r * r + d * d) - 0.5;
  }
  return kl;
}

struct MfviResult {
  MfviPosterior posterior;
  std::vector<double> elbo_history;  // per-epoch Monte Carlo ELBO estimates
};

inline MfviResult mfvi_fit(const LogPosterior& lp, const MfviPosterior& init, int n_mc,
                           int epochs, double lr, Rng& rng) {
  if (n_mc < 1) throw std::invalid_argument("mfvi_fit: n_mc must be >= 1");
  if (init.dim() != lp.dim()) throw DimensionError("mfvi_fit: init dimension mismatch");
  const Eigen::Index dim = lp.dim();
  MfviResult result;
  result.posterior = init;
  Vector& mu = result.posterior.mu;
  Vector& log_sigma = result.posterior.log_sigma;

  // Adam over (mu, log_sigma)
  Vector m = Vector::Zero(2 * dim), v = Vector::Zero(2 * dim);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const Vector prior_mu = Vector::Zero(dim);
  const Vector prior_sigma = Vector::Constant(dim, lp.prior_std());

  Vector lik_grad(dim);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Vector sigma = log_sigma.array().exp();
    Vector g_mu = Vector::Zero(dim);
    Vector g_logsig = Vector::Zero(dim);
    double elbo_lik = 0.0;
    for (int s = 0; s < n_mc; ++s) {
      const Vector zeta = rng.normal_vector(dim);
      const Vector theta = mu + sigma.cwiseProduct(zeta);
      const double lik = lp.log_likelihood(theta, &lik_grad);
      elbo_lik += lik;
      g_mu += lik_grad;
      g_logsig += lik_grad.cwiseProduct(sigma.cwiseProduct(zeta));
    }
    g_mu /= double(n_mc);
    g_logsig /= double(n_mc);
    elbo_lik /= double(n_mc);

    // d KL / d mu = mu / prior_var ; d KL / d log sigma = sigma^2/prior_var - 1
    const double pv = lp.prior_std() * lp.prior_std();
    const Vector kl_g_mu = mu / pv;
    const Vector kl_g_logsig = (sigma.array().square() / pv - 1.0).matrix();
    const double kl = kl_diag_gaussians(mu, sigma, prior_mu, prior_sigma);
    const double elbo = elbo_lik - kl;
    if (!std::isfinite(elbo)) throw DivergenceError(epoch);
    result.elbo_history.push_back(elbo);

    // ascend the ELBO
    Vector grad(2 * dim);
    grad.head(dim) = g_mu - kl_g_mu;
    grad.tail(dim) = g_logsig - kl_g_logsig;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, double(epoch + 1));
    const double bc2 = 1.0 - std::pow(beta2, double(epoch + 1));
    const Vector step =
        (lr / bc1) * (m.array() / ((v.array() / bc2).sqrt() + eps)).matrix();
    mu += step.head(dim);
    log_sigma += step.tail(dim);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stein variational gradient descent. RBF kernel k(a, b) = exp(-||a-b||^2/h)
// with the median heuristic h = median squared pairwise distance / log(Np+1),
// recomputed every step.

inline double svgd_bandwidth(const Matrix& particles) {
  const Eigen::Index np = particles.rows();
  if (np < 2) return 1.0;
  std::vector<double> sq;
  sq.reserve(static_cast<size_t>(np * (np - 1) / 2));
  for (Eigen::Index i = 0; i < np; ++i)
    for (Eigen::Index j = i + 1; j < np; ++j)
      sq.push_back((particles.row(i) - particles.row(j)).squaredNorm());
  const size_t mid = sq.size() / 2;
  std::nth_element(sq.begin(), sq.begin() + mid, sq.end());
  const double median = sq[mid];
  if (median <= 0.0) return 1.0;
  return median / std::log(double(np) + 1.0);
}

// One SVGD update. The perturbation for particle i is
//   (1/Np) sum_j [ k(th_j, th_i) grad log p(th_j) + grad_{th_j} k(th_j, th_i) ].
inline Matrix svgd_step(const Matrix& particles, const LogDensityFn& target, double lr,
                        double bandwidth = 0.0) {
  const Eigen::Index np = particles.rows();
  const Eigen::Index dim = particles.cols();
  if (np < 1) throw std::invalid_argument("svgd_step: need at least one particle");
  const double h = bandwidth > 0.0 ? bandwidth : svgd_bandwidth(particles);

  Matrix scores(np, dim);
  Vector grad(dim);
  for (Eigen::Index j = 0; j < np; ++j) {
    target(particles.row(j).transpose(), &grad);
    scores.row(j) = grad.transpose();
  }
  Matrix updated = particles;
  for (Eigen::Index i = 0; i < np; ++i) {
    Vector phi = Vector::Zero(dim);
    for (Eigen::Index j = 0; j < np; ++j) {
      const Vector diff = (particles.row(i) - particles.row(j)).transpose();
      const double k = std::exp(-diff.squaredNorm() / h);
      phi += k * scores.row(j).transpose();
      phi += (2.0 / h) * k * diff;  // grad_{th_j} k(th_j, th_i)
    }
    phi /= double(np);
    updated.row(i) += lr * phi.transpose();
  }
  return updated;
}

inline Matrix svgd_run(Matrix particles, const LogDensityFn& target, int steps, double lr) {
  for (int s = 0; s < steps; ++s) particles = svgd_step(particles, target, lr);
  return particles;
}

// ---------------------------------------------------------------------------
// MC dropout prediction: T stochastic forward passes with dropout active.

inline GaussianPrediction mc_dropout_predict(const Network& net,
                                             const Eigen::Ref<const Vector>& x, int passes,
                                             Rng& rng) {
  if (!net.spec.has_dropout())
    throw std::invalid_argument("mc_dropout_predict: network has no dropout layers");
  if (passes < 2) throw std::invalid_argument("mc_dropout_predict: need at least two passes");
  const bool gaussian = net.spec.layers.back().kind == Layer::Kind::GaussianOutput;
  Vector means(passes), variances(passes);
  for (int t = 0; t < passes; ++t) {
    const NetOutput out = forward(net, x, ForwardKind::EvalWithDropout, &rng);
    means(t) = out.mean;
    variances(t) = gaussian ? out.variance : 0.0;
  }
  const double mean = means.mean();
  if (gaussian) {
    // equal-weight Gaussian mixture moments over the T (mu, sigma^2) pairs
    const double aleatory = variances.mean();
    const double epistemic = means.array().square().mean() - mean * mean;
    return GaussianPrediction::from_split(mean, aleatory, epistemic);
  }
  const double var =
      passes > 1 ? (means.array() - mean).square().sum() / double(passes - 1) : 0.0;
  return GaussianPrediction::total_only(mean, var);
}

// ---------------------------------------------------------------------------
// Posterior-pushforward / posterior-predictive aggregation over parameter
// samples (rows of `samples`). Pushforward carries the epistemic spread of
// the clean prediction f(x; theta); predictive adds the noise variance.

enum class PredictMode { Pushforward, Predictive };

inline GaussianPrediction posterior_predict(const Matrix& samples, const LogPosterior& lp,
                                            const Eigen::Ref<const Vector>& x, PredictMode mode) {
  if (samples.rows() < 2)
    throw std::invalid_argument("posterior_predict: need at least two parameter samples");
  const Eigen::Index ns = samples.rows();
  Vector outputs(ns);
  for (Eigen::Index s = 0; s < ns; ++s) outputs(s) = lp.model_eval(x, samples.row(s).transpose());
  const double mean = outputs.mean();
  const double pushforward_var = (outputs.array() - mean).square().sum() / double(ns - 1);
  if (mode == PredictMode::Pushforward)
    return GaussianPrediction::from_split(mean, 0.0, pushforward_var);
  const double s2 = lp.noise_std() * lp.noise_std();
  return GaussianPrediction::from_split(mean, s2, pushforward_var);
}

inline GaussianPrediction posterior_predict(const MfviPosterior& q, const LogPosterior& lp,
                                            const Eigen::Ref<const Vector>& x, PredictMode mode,
                                            Eigen::Index n_samples, Rng& rng) {
  Matrix samples(n_samples, q.dim());
  for (Eigen::Index s = 0; s < n_samples; ++s) samples.row(s) = q.sample(rng).transpose();
  return posterior_predict(samples, lp, x, mode);
}

// ---------------------------------------------------------------------------
// Chain / particle CSV dump: one row per sample, one column per parameter.

inline void write_samples_csv(std::ostream& os, const Matrix& samples,
                              const std::vector<std::string>& column_names = {}) {
  if (!column_names.empty() &&
      static_cast<Eigen::Index>(column_names.size()) != samples.cols())
    throw DimensionError("write_samples_csv: column name count mismatch");
  if (column_names.empty()) {
    for (Eigen::Index k = 0; k < samples.cols(); ++k) {
      os << "theta_" << k;
      os << (k + 1 < samples.cols() ? ',' : '\n');
    }
  } else {
    for (Eigen::Index k = 0; k < samples.cols(); ++k) {
      os << column_names[static_cast<size_t>(k)];
      os << (k + 1 < samples.cols() ? ',' : '\n');
    }
  }
  os.precision(17);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index k = 0; k < samples.cols(); ++k) {
      os << samples(i, k);
      os << (k + 1 < samples.cols() ? ',' : '\n');
    }
  }
}

// Column names following the flat parameter layout of a network.
inline std::vector<std::string> theta_column_names(const Network& net) {
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(net.n_params()));
  for (size_t i = 0; i < net.spec.layers.size(); ++i) {
    const auto& ll = net.layout[i];
    if (ll.size == 0) continue;
    const std::string base = "layer" + std::to_string(i);
    const Eigen::Index rows = net.weight(i).rows();
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < ll.in_dim; ++c)
        names.push_back(base + ".w." + std::to_string(r) + "." + std::to_string(c));
    for (Eigen::Index r = 0; r < rows; ++r) names.push_back(base + ".b." + std::to_string(r));
  }
  return names;
}

}  // namespace uqkit
