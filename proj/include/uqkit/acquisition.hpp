#pragma once

// Learning (acquisition) functions over Gaussian predictions and the
// adaptive surrogate-refinement loop: expected feasibility (EFF) and the U
// function for limit-state refinement, expected improvement (EI) for
// minimization.

#include "uqkit/gpr.hpp"
#include "uqkit/numerics.hpp"
#include "uqkit/prediction.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace uqkit {

// EFF(x) = int_{e-tau}^{e+tau} (tau - |e - y|) p(y) dy in closed form via
// standard normal CDF/PDF terms. tau defaults to twice the predictive std.
inline double eff(const GaussianPrediction& pred, double threshold, double halfwidth) {
  const double mu = pred.mean;
  const double sigma = pred.std_total();
  const double e = threshold, tau = halfwidth;
  if (sigma <= 0.0) return std::max(tau - std::abs(e - mu), 0.0);
  const double z = (e - mu) / sigma;
  const double z_lo = (e - tau - mu) / sigma;
  const double z_hi = (e + tau - mu) / sigma;
  return tau * (normal_cdf(z_hi) - normal_cdf(z_lo)) +
         (mu - e) * (2.0 * normal_cdf(z) - normal_cdf(z_lo) - normal_cdf(z_hi)) -
         sigma * (2.0 * normal_pdf(z) - normal_pdf(z_lo) - normal_pdf(z_hi));
}

inline double default_eff_halfwidth(const GaussianPrediction& pred) {
  return 2.0 * pred.std_total();
}

// U(x) = |mu - e| / sigma; a zero-sigma prediction yields the infinity
// sentinel with the flag set.
struct UValue {
  double value = 0.0;
  bool sigma_zero = false;
};

inline UValue u_function(const GaussianPrediction& pred, double threshold) {
  const double sigma = pred.std_total();
  if (sigma <= 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {std::abs(pred.mean - threshold) / sigma, false};
}

// EI(x) = (f_min - mu) Phi(z) + sigma phi(z), z = (f_min - mu) / sigma, for
// minimization; the zero-sigma limit is max(f_min - mu, 0).
inline double ei(const GaussianPrediction& pred, double f_min) {
  const double sigma = pred.std_total();
  if (sigma <= 0.0) return std::max(f_min - pred.mean, 0.0);
  const double z = (f_min - pred.mean) / sigma;
  return (f_min - pred.mean) * normal_cdf(z) + sigma * normal_pdf(z);
}

// ---------------------------------------------------------------------------
// Adaptive refinement over a finite candidate pool. Each iteration scores
// every candidate on the current model, queries the truth oracle at the
// argbest (max for EFF/EI, min for U; ties resolved to the lowest candidate
// index), appends the observation and refits.

enum class AcquisitionKind { Eff, U, Ei };

struct AcquisitionSpec {
  AcquisitionKind kind = AcquisitionKind::Ei;
  double threshold = 0.0;        // limit state e for EFF / U
  double halfwidth_factor = 2.0; // tau = factor * sigma(x) for EFF
};

struct RefineOptions {
  bool reoptimize = true;  // re-run hyperparameter optimization after each query
  int restarts = 2;
};

struct RefineTraceRow {
  int iteration = 0;
  Vector x;
  double acquisition_value = 0.0;
  double oracle_value = 0.0;
};

struct RefineResult {
  GpModel model;
  std::vector<RefineTraceRow> trace;
};

using TruthOracle = std::function<double(const Eigen::Ref<const Vector>&)>;

inline RefineResult refine(const GpModel& initial, const TruthOracle& oracle,
                           const AcquisitionSpec& acq, const Matrix& candidates, int budget,
                           Rng& rng, const RefineOptions& opt = {}) {
  if (budget < 0) throw std::invalid_argument("refine: negative budget");
  if (candidates.rows() == 0) throw std::invalid_argument("refine: empty candidate pool");
  RefineResult result;
  result.model = initial;
  for (int it = 0; it < budget; ++it) {
    const Predictions preds = gp_predict(result.model, candidates, false);
    double f_min = std::numeric_limits<double>::infinity();
    if (acq.kind == AcquisitionKind::Ei) {
      for (Eigen::Index i = 0; i < result.model.y_centered.size(); ++i)
        f_min = std::min(f_min, result.model.y_centered(i) + result.model.y_offset);
    }
    Eigen::Index best = 0;
    double best_score = 0.0;
    bool first = true;
    for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
      double score = 0.0;
      switch (acq.kind) {
        case AcquisitionKind::Eff:
          score = eff(preds[i], acq.threshold, acq.halfwidth_factor * preds[i].std_total());
          break;
        case AcquisitionKind::U:
          score = -u_function(preds[i], acq.threshold).value;  // minimized
          break;
        case AcquisitionKind::Ei:
          score = ei(preds[i], f_min);
          break;
      }
      if (first || score > best_score) {
        best = i;
        best_score = score;
        first = false;
      }
    }
    const Vector x_new = candidates.row(best).transpose();
    double y_new = 0.0;
    try {
      y_new = oracle(x_new);
    } catch (const std::exception& e) {
      throw std::runtime_error("refine: oracle failure at iteration " + std::to_string(it) +
                               ": " + e.what());
    }
    RefineTraceRow row;
    row.iteration = it;
    row.x = x_new;
    row.acquisition_value =
        acq.kind == AcquisitionKind::U ? -best_score : best_score;
    row.oracle_value = y_new;
    result.trace.push_back(row);

    Matrix x2(result.model.x_train.rows() + 1, result.model.x_train.cols());
    x2 << result.model.x_train, x_new.transpose();
    Vector y2(result.model.y_centered.size() + 1);
    for (Eigen::Index i = 0; i < result.model.y_centered.size(); ++i)
      y2(i) = result.model.y_centered(i) + result.model.y_offset;
    y2(y2.size() - 1) = y_new;
    GpFitOptions fit_opt;
    fit_opt.noise_std = result.model.noise_std;
    fit_opt.optimize = opt.reoptimize;
    fit_opt.restarts = opt.restarts;
    fit_opt.optimize_noise = false;  // surrogate mode: noise level stays pinned
    Rng fit_rng = rng.child(static_cast<std::uint64_t>(it));
    result.model = gp_fit(x2, y2, result.model.kernel, fit_opt, fit_rng);
  }
  return result;
}

// columns: iteration, x..., acquisition value, oracle value
inline void write_refine_trace_csv(std::ostream& os, const std::vector<RefineTraceRow>& trace) {
  if (trace.empty()) {
    os << "iteration,acquisition,oracle\n";
    return;
  }
  os << "iteration";
  for (Eigen::Index d = 0; d < trace.front().x.size(); ++d) os << ",x" << d;
  os << ",acquisition,oracle\n";
  os.precision(17);
  for (const auto& row : trace) {
    os << row.iteration;
    for (Eigen::Index d = 0; d < row.x.size(); ++d) os << ',' << row.x(d);
    os << ',' << row.acquisition_value << ',' << row.oracle_value << '\n';
  }
}

}  // namespace uqkit
