#pragma once

// Dense linear algebra, seedable random sampling, and the scalar normal
// utilities shared by every model in the library. All floating point is
// 64-bit.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Cholesky failure; carries the index of the first non-positive pivot.
class DecompositionError : public std::runtime_error {
 public:
  DecompositionError(Eigen::Index pivot, double value)
      : std::runtime_error("cholesky: non-positive pivot " + std::to_string(value) +
                           " at index " + std::to_string(pivot)),
        pivot_(pivot) {}
  Eigen::Index pivot() const { return pivot_; }

 private:
  Eigen::Index pivot_;
};

class SingularSystemError : public std::runtime_error {
 public:
  explicit SingularSystemError(Eigen::Index index)
      : std::runtime_error("triangular solve: zero diagonal at index " + std::to_string(index)),
        index_(index) {}
  Eigen::Index index() const { return index_; }

 private:
  Eigen::Index index_;
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(long epoch, const std::string& context = "")
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + (context.empty() ? "" : " (" + context + ")")),
        epoch_(epoch) {}
  long epoch() const { return epoch_; }

 private:
  long epoch_;
};

// ---------------------------------------------------------------------------
// Rng: xoshiro256++ seeded through splitmix64. No global state anywhere;
// identical seed gives an identical stream. Parallel work derives child
// generators from (seed, task index) so serial and parallel runs agree.

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  std::uint64_t root_seed() const { return root_seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  // Deterministic child stream for task `index`.
  Rng child(std::uint64_t index) const {
    std::uint64_t sm = root_seed_ ^ (0xd1342543de82ef95ULL * (index + 1));
    return Rng(detail::splitmix64(sm));
  }

 private:
  std::uint64_t state_[4];
  std::uint64_t root_seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Scalar normal distribution helpers.

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Inverse standard normal CDF (Acklam's rational approximation polished with
// one Halley step); p must lie strictly inside (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

// ---------------------------------------------------------------------------
// Factorizations and solves.

namespace detail {
inline void require_square_symmetric(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) throw DimensionError(std::string(op) + ": matrix not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw DimensionError(std::string(op) + ": matrix not symmetric");
}
}  // namespace detail

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Throws DecompositionError naming the first failing pivot.
inline Matrix cholesky(const Matrix& a) {
  detail::require_square_symmetric(a, "cholesky");
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) throw DecompositionError(j, d);
    l(j, j) = std::sqrt(d);
    const Eigen::Index m = n - j - 1;
    if (m > 0) {
      l.col(j).tail(m) =
          (a.col(j).tail(m) - l.bottomLeftCorner(m, j) * l.row(j).head(j).transpose()) / l(j, j);
    }
  }
  return l;
}

// Cholesky for positive semi-definite matrices: pivots within tolerance of
// zero produce a zero column (valid for exactly singular covariances such as
// the all-zero matrix); pivots below -tol still throw.
inline Matrix cholesky_psd(const Matrix& a, double rel_tol = 1e-12) {
  detail::require_square_symmetric(a, "cholesky_psd");
  const Eigen::Index n = a.rows();
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1.0);
  const double tol = rel_tol * scale;
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (d < -tol) throw DecompositionError(j, d);
    if (d <= tol) continue;  // semidefinite direction: leave the column zero
    l(j, j) = std::sqrt(d);
    const Eigen::Index m = n - j - 1;
    if (m > 0) {
      l.col(j).tail(m) =
          (a.col(j).tail(m) - l.bottomLeftCorner(m, j) * l.row(j).head(j).transpose()) / l(j, j);
    }
  }
  return l;
}

struct JitteredCholesky {
  Matrix lower;
  double nugget = 0.0;  // value actually added to the diagonal
};

// Cholesky with nugget regularization fallback: on failure, retry with
// 1e-6 * mean(diag) added to the diagonal, escalating tenfold up to
// 1e-2 * mean(diag).
inline JitteredCholesky cholesky_with_jitter(const Matrix& a) {
  try {
    return {cholesky(a), 0.0};
  } catch (const DecompositionError&) {
  }
  const double base = std::max(a.diagonal().mean(), std::numeric_limits<double>::min());
  const Eigen::Index n = a.rows();
  for (double rel = 1e-6; rel <= 1e-2 * (1.0 + 1e-12); rel *= 10.0) {
    const double nugget = rel * base;
    try {
      return {cholesky(a + nugget * Matrix::Identity(n, n)), nugget};
    } catch (const DecompositionError&) {
    }
  }
  // Report the original failure.
  return {cholesky(a), 0.0};
}

// Solve L x = b (or L^T x = b when transposed) for lower-triangular L.
inline Vector tri_solve(const Matrix& l, const Vector& b, bool transposed = false) {
  if (l.rows() != l.cols()) throw DimensionError("tri_solve: matrix not square");
  if (l.rows() != b.size()) throw DimensionError("tri_solve: size mismatch");
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (std::abs(l(i, i)) < std::numeric_limits<double>::min()) throw SingularSystemError(i);
  }
  if (transposed) return l.transpose().triangularView<Eigen::Upper>().solve(b);
  return l.triangularView<Eigen::Lower>().solve(b);
}

inline Matrix tri_solve_matrix(const Matrix& l, const Matrix& b, bool transposed = false) {
  if (l.rows() != l.cols()) throw DimensionError("tri_solve: matrix not square");
  if (l.rows() != b.rows()) throw DimensionError("tri_solve: size mismatch");
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (std::abs(l(i, i)) < std::numeric_limits<double>::min()) throw SingularSystemError(i);
  }
  if (transposed) return l.transpose().triangularView<Eigen::Upper>().solve(b);
  return l.triangularView<Eigen::Lower>().solve(b);
}

// ---------------------------------------------------------------------------
// Multivariate normal sampling. Accepts PSD covariances (a zero covariance
// returns copies of the mean); indefinite inputs go through the nugget
// escalation before giving up.
inline Matrix sample_mvn(Rng& rng, const Vector& mean, const Matrix& cov, Eigen::Index n) {
  if (cov.rows() != cov.cols()) throw DimensionError("sample_mvn: covariance not square");
  if (cov.rows() != mean.size()) throw DimensionError("sample_mvn: mean/covariance mismatch");
  Matrix l;
  try {
    l = cholesky_psd(cov);
  } catch (const DecompositionError&) {
    const double base = std::max(cov.diagonal().mean(), std::numeric_limits<double>::min());
    bool ok = false;
    for (double rel = 1e-6; rel <= 1e-2 * (1.0 + 1e-12) && !ok; rel *= 10.0) {
      try {
        l = cholesky_psd(cov + rel * base * Matrix::Identity(cov.rows(), cov.cols()));
        ok = true;
      } catch (const DecompositionError&) {
      }
    }
    if (!ok) l = cholesky_psd(cov);  // rethrows with the pivot index
  }
  Matrix samples(n, mean.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    samples.row(i) = (mean + l * rng.normal_vector(mean.size())).transpose();
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Largest singular value by power iteration on W^T W. The Rayleigh-quotient
// estimate is monotonically nondecreasing across iterations.

struct SpectralEstimate {
  double sigma = 0.0;
  Vector left;   // u such that W v = sigma u
  Vector right;  // v
};

inline SpectralEstimate power_iteration(const Matrix& w, int iters = 200, double tol = 1e-12,
                                        std::vector<double>* history = nullptr,
                                        const Vector* warm_start = nullptr) {
  const Eigen::Index rows = w.rows(), cols = w.cols();
  SpectralEstimate est;
  est.left = Vector::Zero(rows);
  est.right = Vector::Zero(cols);
  if (w.cwiseAbs().maxCoeff() == 0.0) return est;

  Vector v;
  if (warm_start != nullptr && warm_start->size() == cols && warm_start->norm() > 0.0) {
    v = *warm_start / warm_start->norm();
  } else {
    v = Vector::Constant(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  }
  double sigma_prev = -1.0;
  for (int it = 0; it < iters; ++it) {
    Vector wv = w * v;
    double sigma = wv.norm();
    if (sigma == 0.0) {
      // v landed in the null space; restart from a basis vector
      v = Vector::Unit(cols, it % cols);
      continue;
    }
    if (history != nullptr) history->push_back(sigma);
    Vector next = w.transpose() * wv;
    const double norm_next = next.norm();
    if (norm_next == 0.0) {
      est.sigma = sigma;
      est.right = v;
      est.left = wv / sigma;
      return est;
    }
    v = next / norm_next;
    if (sigma_prev >= 0.0 && std::abs(sigma - sigma_prev) <= tol * std::max(sigma, 1e-300)) {
      sigma_prev = sigma;
      break;
    }
    sigma_prev = sigma;
  }
  Vector wv = w * v;
  est.sigma = wv.norm();
  est.right = v;
  est.left = est.sigma > 0.0 ? Vector(wv / est.sigma) : Vector::Zero(rows);
  return est;
}

}  // namespace uqkit
