#pragma once

// Exact Gaussian process regression: prior/posterior sampling, prediction
// with the aleatory/epistemic split, and marginal-likelihood hyperparameter
// optimization (multi-start gradient ascent in log space).
//
// The prior mean is handled by centering the targets on their training mean
// and adding the stored offset back at prediction time.

#include "uqkit/kernels.hpp"
#include "uqkit/numerics.hpp"
#include "uqkit/prediction.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace uqkit {

struct GpModel {
  Matrix x_train;        // N x D
  Vector y_centered;     // N, targets minus offset
  double y_offset = 0.0; // stored constant prior-mean offset
  KernelSpec kernel;
  double noise_std = 0.0;
  Matrix chol_lower;     // L with L L^T = K + noise^2 I (+ nugget if needed)
  Vector alpha;          // (K + noise^2 I)^{-1} y_centered
  double nugget = 0.0;   // diagonal addition required to factorize, if any

  Eigen::Index n_train() const { return x_train.rows(); }
  Eigen::Index dim() const { return x_train.cols(); }
};

struct GpFitOptions {
  double noise_std = 0.1;
  bool optimize = false;
  int restarts = 4;          // random initializations beyond the provided one
  bool optimize_noise = true; // pin noise_std when false (noise-free surrogate mode)
  int max_iters = 200;
  double grad_tol = 1e-7;
};

namespace detail {

inline void refresh_factors(GpModel& m) {
  Matrix k = cov_matrix(m.kernel, m.x_train);
  k.diagonal().array() += m.noise_std * m.noise_std;
  const JitteredCholesky jc = cholesky_with_jitter(k);
  m.chol_lower = jc.lower;
  m.nugget = jc.nugget;
  const Vector tmp = tri_solve(m.chol_lower, m.y_centered, false);
  m.alpha = tri_solve(m.chol_lower, tmp, true);
}

// Log-hyperparameter vector layout: [log l_1 .. log l_D, log sigma_f, log noise].
inline Vector pack_log_params(const KernelSpec& k, double noise_std) {
  Vector v(k.n_hyperparameters() + 1);
  for (Eigen::Index d = 0; d < k.length_scales.size(); ++d) v(d) = std::log(k.length_scales(d));
  v(k.length_scales.size()) = std::log(k.sigma_f);
  v(k.length_scales.size() + 1) = std::log(std::max(noise_std, 1e-12));
  return v;
}

inline void unpack_log_params(const Vector& v, KernelSpec& k, double& noise_std) {
  for (Eigen::Index d = 0; d < k.length_scales.size(); ++d) k.length_scales(d) = std::exp(v(d));
  k.sigma_f = std::exp(v(k.length_scales.size()));
  noise_std = std::exp(v(k.length_scales.size() + 1));
}

}  // namespace detail

// log p(y | X, theta) = -1/2 y^T alpha - sum_i log L_ii - (N/2) log 2*pi.
inline double log_marginal_likelihood(const GpModel& m) {
  const double n = static_cast<double>(m.n_train());
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < m.chol_lower.rows(); ++i)
    log_det_half += std::log(m.chol_lower(i, i));
  return -0.5 * m.y_centered.dot(m.alpha) - log_det_half - 0.5 * n * std::log(2.0 * M_PI);
}

// Value and gradient with respect to the log hyperparameters
// [log l_1 .. log l_D, log sigma_f, log noise_std].
struct LmlWithGrad {
  double value = 0.0;
  Vector grad;
};

inline LmlWithGrad log_marginal_likelihood_with_grad(const GpModel& m) {
  LmlWithGrad out;
  out.value = log_marginal_likelihood(m);
  const Eigen::Index n = m.n_train();
  // K_inv via two triangular solves on the identity
  const Matrix k_inv =
      tri_solve_matrix(m.chol_lower, tri_solve_matrix(m.chol_lower, Matrix::Identity(n, n)), true);
  const Matrix outer = m.alpha * m.alpha.transpose();
  const std::vector<Matrix> kg = kernel_grad(m.kernel, m.x_train);
  const Eigen::Index n_kernel = static_cast<Eigen::Index>(kg.size());
  out.grad = Vector::Zero(n_kernel + 1);
  for (Eigen::Index p = 0; p < n_kernel; ++p) {
    // chain rule into log space: dK/d(log th) = dK/dth * th
    const double param = p < m.kernel.length_scales.size() ? m.kernel.length_scales(p)
                                                           : m.kernel.sigma_f;
    out.grad(p) = 0.5 * ((outer - k_inv).cwiseProduct(kg[p])).sum() * param;
  }
  // d(K + s^2 I)/d(log s) = 2 s^2 I
  const double s2 = m.noise_std * m.noise_std;
  out.grad(n_kernel) = 0.5 * (outer - k_inv).trace() * 2.0 * s2;
  return out;
}

namespace detail {

inline GpModel make_model(const Matrix& x, const Vector& y, KernelSpec kernel, double noise_std) {
  GpModel m;
  m.x_train = x;
  m.y_offset = y.mean();
  m.y_centered = y.array() - m.y_offset;
  m.kernel = std::move(kernel);
  m.noise_std = noise_std;
  refresh_factors(m);
  return m;
}

// Gradient ascent with backtracking line search in log-parameter space.
inline double ascend(GpModel& m, const GpFitOptions& opt) {
  Vector params = pack_log_params(m.kernel, m.noise_std);
  LmlWithGrad cur = log_marginal_likelihood_with_grad(m);
  double step = 0.1;
  for (int it = 0; it < opt.max_iters; ++it) {
    Vector g = cur.grad;
    if (!opt.optimize_noise) g(params.size() - 1) = 0.0;
    const double gnorm = g.norm();
    if (gnorm < opt.grad_tol * std::max(1.0, std::abs(cur.value))) break;
    Vector direction = g / gnorm;
    bool improved = false;
    for (int bt = 0; bt < 30; ++bt) {
      Vector trial = params + step * direction;
      // keep parameters inside a sane numeric range
      trial = trial.cwiseMax(-23.0).cwiseMin(23.0);
      GpModel probe = m;
      unpack_log_params(trial, probe.kernel, probe.noise_std);
      try {
        refresh_factors(probe);
      } catch (const DecompositionError&) {
        step *= 0.5;
        continue;
      }
      const double lml = log_marginal_likelihood(probe);
      if (std::isfinite(lml) && lml > cur.value + 1e-4 * step * gnorm) {
        m = probe;
        params = trial;
        cur = log_marginal_likelihood_with_grad(m);
        step = std::min(step * 2.0, 1.0);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  return cur.value;
}

}  // namespace detail

inline GpModel gp_fit(const Matrix& x, const Vector& y, const KernelSpec& kernel,
                      const GpFitOptions& opt, Rng& rng) {
  if (x.rows() == 0) throw std::invalid_argument("gp_fit: empty training set");
  if (x.rows() != y.size()) throw DimensionError("gp_fit: X/y size mismatch");
  detail::validate_kernel(kernel);
  detail::check_dims(kernel, x.cols(), "gp_fit");

  GpModel best = detail::make_model(x, y, kernel, opt.noise_std);
  if (!opt.optimize) return best;

  double best_lml = detail::ascend(best, opt);

  const double y_std = x.rows() > 1 ? std::sqrt((y.array() - y.mean()).square().sum() /
                                                double(y.size() - 1))
                                    : 1.0;
  const double scale = y_std > 0.0 ? y_std : 1.0;
  for (int r = 0; r < opt.restarts; ++r) {
    Rng sub = rng.child(static_cast<std::uint64_t>(r));
    KernelSpec k0 = kernel;
    for (Eigen::Index d = 0; d < k0.length_scales.size(); ++d)
      k0.length_scales(d) = std::exp(sub.uniform(std::log(1e-2), std::log(1e2)));
    k0.sigma_f = scale * std::exp(sub.uniform(std::log(1e-2), std::log(1e2)));
    const double noise0 = opt.optimize_noise
                              ? scale * std::exp(sub.uniform(std::log(1e-3), std::log(1.0)))
                              : opt.noise_std;
    GpModel trial;
    try {
      trial = detail::make_model(x, y, k0, noise0);
    } catch (const DecompositionError&) {
      continue;
    }
    const double lml = detail::ascend(trial, opt);
    if (lml > best_lml) {
      best_lml = lml;
      best = trial;
    }
  }
  return best;
}

// Posterior prediction at the rows of x_new. Epistemic variance is the
// posterior variance of the latent function; the aleatory component is the
// noise variance when include_noise is set.
inline Predictions gp_predict(const GpModel& m, const Matrix& x_new, bool include_noise) {
  if (x_new.cols() != m.dim()) throw DimensionError("gp_predict: input dimension mismatch");
  const Matrix k_cross = cov_matrix(m.kernel, m.x_train, x_new);  // N x M
  const Matrix v = tri_solve_matrix(m.chol_lower, k_cross, false);
  const double noise_var = include_noise ? m.noise_std * m.noise_std : 0.0;
  Predictions out;
  out.reserve(static_cast<size_t>(x_new.rows()));
  for (Eigen::Index j = 0; j < x_new.rows(); ++j) {
    const double prior_var =
        kernel_eval(m.kernel, x_new.row(j).transpose(), x_new.row(j).transpose());
    const double epi = prior_var - v.col(j).squaredNorm();
    const double mean = m.y_offset + k_cross.col(j).dot(m.alpha);
    out.push_back(GaussianPrediction::from_split(mean, noise_var, epi));
  }
  return out;
}

// Full posterior over x_new: mean vector and dense covariance of the latent
// function values (used by posterior sampling).
struct GpPosterior {
  Vector mean;
  Matrix cov;
};

inline GpPosterior gp_posterior_joint(const GpModel& m, const Matrix& x_new) {
  if (x_new.cols() != m.dim()) throw DimensionError("gp_posterior_joint: dimension mismatch");
  const Matrix k_cross = cov_matrix(m.kernel, m.x_train, x_new);
  const Matrix k_new = cov_matrix(m.kernel, x_new);
  const Matrix v = tri_solve_matrix(m.chol_lower, k_cross, false);
  GpPosterior post;
  post.mean = Vector::Constant(x_new.rows(), m.y_offset) + k_cross.transpose() * m.alpha;
  post.cov = k_new - v.transpose() * v;
  post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
  return post;
}

// n function draws from the prior at the rows of x_new (one draw per row).
inline Matrix gp_sample_prior(const KernelSpec& kernel, const Matrix& x_new, Eigen::Index n,
                              Rng& rng) {
  const Matrix cov = cov_matrix(kernel, x_new);
  return sample_mvn(rng, Vector::Zero(x_new.rows()), cov, n);
}

inline Matrix gp_sample_posterior(const GpModel& m, const Matrix& x_new, Eigen::Index n,
                                  Rng& rng) {
  const GpPosterior post = gp_posterior_joint(m, x_new);
  return sample_mvn(rng, post.mean, post.cov, n);
}

// Smallest Euclidean distance from x to the training inputs. Reported by the
// CLI alongside the posterior variance: far outside the training range the
// variance saturates while the extrapolation error keeps growing, so the
// distance is the caller's trust signal.
inline double gp_distance_to_train(const GpModel& m, const Eigen::Ref<const Vector>& x) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m.n_train(); ++i)
    best = std::min(best, (m.x_train.row(i).transpose() - x).norm());
  return best;
}

// ---------------------------------------------------------------------------
// Serialization: kernel spec, noise, training data and offset; factors are
// recomputed on load.

inline nlohmann::json gp_to_json(const GpModel& m) {
  nlohmann::json j;
  j["kernel"] = kernel_to_json(m.kernel);
  j["noise_std"] = m.noise_std;
  j["y_offset"] = m.y_offset;
  j["x_train"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.x_train.rows(); ++i) {
    std::vector<double> row(m.x_train.row(i).data(), m.x_train.row(i).data() + m.x_train.cols());
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.x_train.cols(); ++c) r.push_back(m.x_train(i, c));
    j["x_train"].push_back(r);
  }
  j["y_train"] = std::vector<double>();
  for (Eigen::Index i = 0; i < m.y_centered.size(); ++i)
    j["y_train"].push_back(m.y_centered(i) + m.y_offset);
  return j;
}

inline GpModel gp_from_json(const nlohmann::json& j) {
  const KernelSpec kernel = kernel_from_json(j.at("kernel"));
  const auto rows = j.at("x_train");
  const auto ys = j.at("y_train").get<std::vector<double>>();
  if (rows.size() != ys.size()) throw std::invalid_argument("gp_from_json: X/y size mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = n > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) x(i, c) = rows.at(i).at(c).get<double>();
  Vector y = Eigen::Map<const Vector>(ys.data(), n);
  GpModel m = detail::make_model(x, y, kernel, j.at("noise_std").get<double>());
  return m;
}

}  // namespace uqkit
