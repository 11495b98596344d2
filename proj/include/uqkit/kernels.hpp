#pragma once

// Covariance functions for Gaussian process regression and the SNGP head:
// squared exponential (isotropic and ARD), Matern at the three half-integer
// orders, and the absolute exponential (= Matern 1/2). Hyperparameters are
// positive; optimization happens in log space.

#include "uqkit/numerics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqkit {

enum class KernelFamily {
  SquaredExponential,
  ArdSquaredExponential,
  Matern,
  AbsoluteExponential,
};

struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  double nu = 0.0;  // Matern smoothness; one of 1/2, 3/2, 5/2
  double sigma_f = 1.0;
  Vector length_scales = Vector::Constant(1, 1.0);

  static KernelSpec squared_exponential(double sigma_f, double length_scale) {
    return {KernelFamily::SquaredExponential, 0.0, sigma_f, Vector::Constant(1, length_scale)};
  }
  static KernelSpec ard_squared_exponential(double sigma_f, Vector length_scales) {
    return {KernelFamily::ArdSquaredExponential, 0.0, sigma_f, std::move(length_scales)};
  }
  static KernelSpec matern(double nu, double sigma_f, double length_scale) {
    return {KernelFamily::Matern, nu, sigma_f, Vector::Constant(1, length_scale)};
  }
  static KernelSpec absolute_exponential(double sigma_f, double length_scale) {
    return {KernelFamily::AbsoluteExponential, 0.0, sigma_f, Vector::Constant(1, length_scale)};
  }

  bool is_ard() const { return family == KernelFamily::ArdSquaredExponential; }

  // Number of optimizable hyperparameters: length scale(s) then sigma_f.
  Eigen::Index n_hyperparameters() const { return length_scales.size() + 1; }
};

namespace detail {

inline void validate_kernel(const KernelSpec& k) {
  if (!(k.sigma_f > 0.0)) throw std::invalid_argument("kernel: sigma_f must be positive");
  if (k.length_scales.size() < 1) throw std::invalid_argument("kernel: missing length scale");
  for (Eigen::Index d = 0; d < k.length_scales.size(); ++d) {
    if (!(k.length_scales(d) > 0.0))
      throw std::invalid_argument("kernel: length scales must be positive");
  }
  if (k.family == KernelFamily::Matern && k.nu != 0.5 && k.nu != 1.5 && k.nu != 2.5)
    throw std::invalid_argument("kernel: unsupported Matern order (use 1/2, 3/2 or 5/2)");
  if (!k.is_ard() && k.length_scales.size() != 1)
    throw std::invalid_argument("kernel: per-dimension length scales require the ARD family");
}

inline void check_dims(const KernelSpec& k, Eigen::Index dim, const char* op) {
  if (k.is_ard() && k.length_scales.size() != dim)
    throw DimensionError(std::string(op) + ": ARD length-scale count != input dimension");
}

// Matern 1/2, 3/2, 5/2 as closed forms in a = sqrt(2 nu) d / l.
inline double matern_value(double nu, double scaled_dist, double sigma_f2) {
  if (nu == 0.5) return sigma_f2 * std::exp(-scaled_dist);
  if (nu == 1.5) {
    const double a = std::sqrt(3.0) * scaled_dist;
    return sigma_f2 * (1.0 + a) * std::exp(-a);
  }
  const double a = std::sqrt(5.0) * scaled_dist;
  return sigma_f2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

}  // namespace detail

// k(x, x'); symmetric, bounded by sigma_f^2, positive.
inline double kernel_eval(const KernelSpec& k, const Eigen::Ref<const Vector>& x,
                          const Eigen::Ref<const Vector>& y) {
  detail::validate_kernel(k);
  if (x.size() != y.size()) throw DimensionError("kernel_eval: input dimensions differ");
  detail::check_dims(k, x.size(), "kernel_eval");
  const double sf2 = k.sigma_f * k.sigma_f;
  switch (k.family) {
    // The isotropic form shares the ARD arithmetic so that ARD with equal
    // length scales reproduces it exactly.
    case KernelFamily::SquaredExponential: {
      double s = 0.0;
      for (Eigen::Index d = 0; d < x.size(); ++d) {
        const double r = (x(d) - y(d)) / k.length_scales(0);
        s += r * r;
      }
      return sf2 * std::exp(-0.5 * s);
    }
    case KernelFamily::ArdSquaredExponential: {
      double s = 0.0;
      for (Eigen::Index d = 0; d < x.size(); ++d) {
        const double r = (x(d) - y(d)) / k.length_scales(d);
        s += r * r;
      }
      return sf2 * std::exp(-0.5 * s);
    }
    case KernelFamily::Matern:
      return detail::matern_value(k.nu, (x - y).norm() / k.length_scales(0), sf2);
    case KernelFamily::AbsoluteExponential:
      return sf2 * std::exp(-(x - y).norm() / k.length_scales(0));
  }
  return 0.0;
}

// N x M covariance matrix between the rows of X and X'.
inline Matrix cov_matrix(const KernelSpec& k, const Matrix& x, const Matrix& y) {
  detail::validate_kernel(k);
  if (x.cols() != y.cols()) throw DimensionError("cov_matrix: input dimensions differ");
  detail::check_dims(k, x.cols(), "cov_matrix");
  Matrix out(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      out(i, j) = kernel_eval(k, x.row(i).transpose(), y.row(j).transpose());
  return out;
}

inline Matrix cov_matrix(const KernelSpec& k, const Matrix& x) {
  Matrix out = cov_matrix(k, x, x);
  // enforce exact symmetry against accumulation order differences
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

// Derivatives of cov_matrix(X, X) with respect to each hyperparameter in
// linear space, ordered [l_1 .. l_D, sigma_f]. Backs the gradient-based
// maximization of the log marginal likelihood.
inline std::vector<Matrix> kernel_grad(const KernelSpec& k, const Matrix& x) {
  detail::validate_kernel(k);
  detail::check_dims(k, x.cols(), "kernel_grad");
  const Eigen::Index n = x.rows();
  const Eigen::Index n_ls = k.length_scales.size();
  std::vector<Matrix> grads(n_ls + 1, Matrix::Zero(n, n));
  const double sf = k.sigma_f;

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Vector diff = (x.row(i) - x.row(j)).transpose();
      const double kv = kernel_eval(k, x.row(i).transpose(), x.row(j).transpose());
      // d k / d sigma_f = 2 k / sigma_f
      grads[n_ls](i, j) = grads[n_ls](j, i) = 2.0 * kv / sf;
      switch (k.family) {
        case KernelFamily::SquaredExponential: {
          const double l = k.length_scales(0);
          const double g = kv * diff.squaredNorm() / (l * l * l);
          grads[0](i, j) = grads[0](j, i) = g;
          break;
        }
        case KernelFamily::ArdSquaredExponential: {
          for (Eigen::Index d = 0; d < n_ls; ++d) {
            const double l = k.length_scales(d);
            const double g = kv * diff(d) * diff(d) / (l * l * l);
            grads[d](i, j) = grads[d](j, i) = g;
          }
          break;
        }
        case KernelFamily::Matern: {
          const double l = k.length_scales(0);
          const double dist = diff.norm();
          const double sf2 = sf * sf;
          double g = 0.0;
          if (k.nu == 0.5) {
            g = sf2 * std::exp(-dist / l) * dist / (l * l);
          } else if (k.nu == 1.5) {
            const double a = std::sqrt(3.0) * dist / l;
            g = sf2 * std::exp(-a) * a * a / l;
          } else {
            const double a = std::sqrt(5.0) * dist / l;
            g = sf2 * std::exp(-a) * (a * a / 3.0) * (1.0 + a) / l;
          }
          grads[0](i, j) = grads[0](j, i) = g;
          break;
        }
        case KernelFamily::AbsoluteExponential: {
          const double l = k.length_scales(0);
          const double dist = diff.norm();
          const double g = sf * sf * std::exp(-dist / l) * dist / (l * l);
          grads[0](i, j) = grads[0](j, i) = g;
          break;
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// JSON serialization: {family, nu?, sigma_f, length_scales[]}

inline std::string kernel_family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::SquaredExponential: return "squared_exponential";
    case KernelFamily::ArdSquaredExponential: return "ard_squared_exponential";
    case KernelFamily::Matern: return "matern";
    case KernelFamily::AbsoluteExponential: return "absolute_exponential";
  }
  return "?";
}

inline KernelFamily kernel_family_from_name(const std::string& name) {
  if (name == "squared_exponential") return KernelFamily::SquaredExponential;
  if (name == "ard_squared_exponential") return KernelFamily::ArdSquaredExponential;
  if (name == "matern") return KernelFamily::Matern;
  if (name == "absolute_exponential") return KernelFamily::AbsoluteExponential;
  throw std::invalid_argument("unknown kernel family: " + name);
}

inline nlohmann::json kernel_to_json(const KernelSpec& k) {
  nlohmann::json j;
  j["family"] = kernel_family_name(k.family);
  if (k.family == KernelFamily::Matern) j["nu"] = k.nu;
  j["sigma_f"] = k.sigma_f;
  j["length_scales"] = std::vector<double>(k.length_scales.data(),
                                           k.length_scales.data() + k.length_scales.size());
  return j;
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  KernelSpec k;
  k.family = kernel_family_from_name(j.at("family").get<std::string>());
  if (j.contains("nu")) k.nu = j.at("nu").get<double>();
  k.sigma_f = j.at("sigma_f").get<double>();
  const auto ls = j.at("length_scales").get<std::vector<double>>();
  k.length_scales = Eigen::Map<const Vector>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  detail::validate_kernel(k);
  return k;
}

}  // namespace uqkit
