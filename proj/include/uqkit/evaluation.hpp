#pragma once

// Quality-of-uncertainty metrics: calibration curves for regression
// (two-sided and one-sided intervals) and binary classification, ECE,
// miscalibration area, u-pooling, NLL, sparsification with AUSE/AURG, and
// isotonic recalibration of predictive CDF levels.

#include "uqkit/numerics.hpp"
#include "uqkit/prediction.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace uqkit {

enum class CalibrationMode { TwoSided, OneSided, Classification };

struct CalibrationCurve {
  std::vector<double> levels;    // expected confidences (bin centers for classification)
  std::vector<double> observed;  // empirical confidences; NaN marks an empty bin
  std::vector<double> weights;   // per-level counts backing the count-weighted ECE
  CalibrationMode mode = CalibrationMode::TwoSided;
};

inline std::vector<double> default_levels(int k = 11) {
  std::vector<double> levels(k);
  for (int j = 0; j < k; ++j) levels[j] = double(j) / double(k - 1);
  return levels;
}

// Predictive CDF value of a target under a Gaussian prediction; degenerate
// zero-variance predictions collapse to a step function.
inline double predictive_cdf(const GaussianPrediction& p, double target) {
  const double sigma = p.std_total();
  if (sigma == 0.0) {
    if (target < p.mean) return 0.0;
    if (target > p.mean) return 1.0;
    return 0.5;
  }
  return normal_cdf((target - p.mean) / sigma);
}

inline CalibrationCurve regression_calibration(const Predictions& preds,
                                               const std::vector<double>& targets,
                                               const std::vector<double>& levels,
                                               CalibrationMode mode = CalibrationMode::TwoSided) {
  if (preds.size() != targets.size())
    throw DimensionError("regression_calibration: preds/targets size mismatch");
  if (preds.empty()) throw std::invalid_argument("regression_calibration: empty input");
  if (mode == CalibrationMode::Classification)
    throw std::invalid_argument("regression_calibration: use classification_calibration");
  for (size_t j = 1; j < levels.size(); ++j)
    if (!(levels[j] > levels[j - 1]))
      throw std::invalid_argument("regression_calibration: levels must be strictly increasing");

  CalibrationCurve curve;
  curve.mode = mode;
  curve.levels = levels;
  const double n = static_cast<double>(preds.size());
  for (double c : levels) {
    long inside = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      const GaussianPrediction& p = preds[i];
      bool in = false;
      if (mode == CalibrationMode::TwoSided) {
        if (c >= 1.0) {
          in = std::isfinite(targets[i]);
        } else {
          const double z = c <= 0.0 ? 0.0 : normal_quantile(0.5 * (1.0 + c));
          in = std::abs(targets[i] - p.mean) <= z * p.std_total();
        }
      } else {  // one-sided: CI = (-inf, quantile(c)]
        in = predictive_cdf(p, targets[i]) <= c;
      }
      if (in) ++inside;
    }
    curve.observed.push_back(double(inside) / n);
    curve.weights.push_back(double(inside));
  }
  return curve;
}

// Binary classification reliability curve: bins of width 1/K over the
// predicted class-1 probability; observed confidence per bin is the empirical
// fraction of positive labels. Empty bins carry weight 0 and NaN observed.
inline CalibrationCurve classification_calibration(const std::vector<double>& probs,
                                                   const std::vector<int>& labels, int k_bins) {
  if (probs.size() != labels.size())
    throw DimensionError("classification_calibration: probs/labels size mismatch");
  if (k_bins < 1) throw std::invalid_argument("classification_calibration: need >= 1 bin");
  for (int y : labels)
    if (y != 0 && y != 1)
      throw std::invalid_argument("classification_calibration: labels must be 0 or 1");
  for (double p : probs)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("classification_calibration: probabilities must lie in [0,1]");

  CalibrationCurve curve;
  curve.mode = CalibrationMode::Classification;
  std::vector<long> count(k_bins, 0);
  std::vector<long> positives(k_bins, 0);
  for (size_t i = 0; i < probs.size(); ++i) {
    int bin = probs[i] <= 0.0 ? 0 : static_cast<int>(std::ceil(probs[i] * k_bins)) - 1;
    bin = std::clamp(bin, 0, k_bins - 1);
    ++count[bin];
    positives[bin] += labels[i];
  }
  for (int j = 0; j < k_bins; ++j) {
    curve.levels.push_back((double(j) + 0.5) / double(k_bins));
    curve.weights.push_back(double(count[j]));
    curve.observed.push_back(count[j] > 0 ? double(positives[j]) / double(count[j])
                                          : std::numeric_limits<double>::quiet_NaN());
  }
  return curve;
}

enum class EceWeighting { Uniform, Count };

// Weighted mean absolute gap between the curve and the identity; weights
// normalize to one over the non-empty levels.
inline double ece(const CalibrationCurve& curve, EceWeighting weighting = EceWeighting::Uniform) {
  double total_weight = 0.0;
  double total = 0.0;
  for (size_t j = 0; j < curve.levels.size(); ++j) {
    if (std::isnan(curve.observed[j])) continue;
    const double w = weighting == EceWeighting::Uniform ? 1.0 : curve.weights[j];
    total_weight += w;
    total += w * std::abs(curve.observed[j] - curve.levels[j]);
  }
  if (total_weight <= 0.0) throw std::invalid_argument("ece: no populated levels");
  return total / total_weight;
}

// Area between the piecewise-linear calibration curve and the identity over
// [c_1, c_K]; lobes above and below both count (no cancellation).
inline double miscalibration_area(const CalibrationCurve& curve) {
  std::vector<double> xs, ds;
  for (size_t j = 0; j < curve.levels.size(); ++j) {
    if (std::isnan(curve.observed[j])) continue;
    xs.push_back(curve.levels[j]);
    ds.push_back(curve.observed[j] - curve.levels[j]);
  }
  if (xs.size() < 2) throw std::invalid_argument("miscalibration_area: need >= 2 levels");
  double area = 0.0;
  for (size_t j = 1; j < xs.size(); ++j) {
    const double w = xs[j] - xs[j - 1];
    const double a = ds[j - 1], b = ds[j];
    if (a * b >= 0.0) {
      area += 0.5 * (std::abs(a) + std::abs(b)) * w;
    } else {
      // the linear segment crosses zero; integrate the two triangles exactly
      const double t = std::abs(a) / (std::abs(a) + std::abs(b));
      area += 0.5 * (std::abs(a) * t + std::abs(b) * (1.0 - t)) * w;
    }
  }
  return area;
}

// ---------------------------------------------------------------------------
// u-pooling: predictive CDF values of the observations and the exact L1 area
// between their empirical CDF and the uniform CDF.

struct UPoolResult {
  std::vector<double> u;
  double area = 0.0;
};

inline double ecdf_uniform_area(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double area = 0.0;
  // on (u_k, u_{k+1}) the empirical CDF equals k/n; integrate |k/n - t| exactly
  auto segment = [&](double a, double b, double value) {
    if (b <= a) return;
    if (value <= a) {
      area += 0.5 * ((b - value) * (b - value) - (a - value) * (a - value));
    } else if (value >= b) {
      area += 0.5 * ((value - a) * (value - a) - (value - b) * (value - b));
    } else {
      area += 0.5 * ((value - a) * (value - a) + (b - value) * (b - value));
    }
  };
  double prev = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    const double clamped = std::clamp(u[k], 0.0, 1.0);
    segment(prev, clamped, double(k) / n);
    prev = clamped;
  }
  segment(prev, 1.0, 1.0);
  return area;
}

inline UPoolResult u_pool(const Predictions& preds, const std::vector<double>& targets) {
  if (preds.size() != targets.size()) throw DimensionError("u_pool: preds/targets size mismatch");
  if (preds.empty()) throw std::invalid_argument("u_pool: empty input");
  UPoolResult result;
  result.u.reserve(preds.size());
  for (size_t i = 0; i < preds.size(); ++i)
    result.u.push_back(predictive_cdf(preds[i], targets[i]));
  result.area = ecdf_uniform_area(result.u);
  return result;
}

// ---------------------------------------------------------------------------
// Mean negative log likelihood under the Gaussian predictions:
// 1/2 log sigma^2 + (y - mu)^2 / (2 sigma^2), plus 1/2 log 2 pi when the
// constant convention is requested.
inline double nll(const Predictions& preds, const std::vector<double>& targets,
                  bool include_constant = false) {
  if (preds.size() != targets.size()) throw DimensionError("nll: preds/targets size mismatch");
  if (preds.empty()) throw std::invalid_argument("nll: empty input");
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const double v = preds[i].variance_total;
    if (!(v > 0.0)) throw std::invalid_argument("nll: requires positive predictive variance");
    const double r = targets[i] - preds[i].mean;
    total += 0.5 * std::log(v) + r * r / (2.0 * v);
  }
  double mean = total / double(preds.size());
  if (include_constant) mean += 0.5 * std::log(2.0 * M_PI);
  return mean;
}

// ---------------------------------------------------------------------------
// Sparsification: iteratively remove the highest-uncertainty fraction of the
// remaining samples and track the error of what is left. The oracle ranks by
// true absolute error; the random baseline averages 20 seeded shuffles.

enum class SparsificationMetric { Rmse, Mae };

struct SparsificationReport {
  std::vector<double> fractions;  // fraction of samples removed so far
  std::vector<double> error;      // metric on the remaining set (uncertainty ranking)
  std::vector<double> oracle;     // metric with the true-error ranking
  std::vector<double> random;     // mean metric over random removal orders
  double ause = 0.0;              // area between error curve and oracle
  double aurg = 0.0;              // area between random baseline and error curve
};

namespace detail {

inline double remaining_metric(const std::vector<double>& abs_errors,
                               const std::vector<size_t>& order, size_t removed,
                               SparsificationMetric metric) {
  double acc = 0.0;
  const size_t n = order.size() - removed;
  for (size_t i = removed; i < order.size(); ++i) {
    const double e = abs_errors[order[i]];
    acc += metric == SparsificationMetric::Rmse ? e * e : e;
  }
  acc /= double(n);
  return metric == SparsificationMetric::Rmse ? std::sqrt(acc) : acc;
}

inline double trapezoid_between(const std::vector<double>& x, const std::vector<double>& upper,
                                const std::vector<double>& lower) {
  double area = 0.0;
  for (size_t i = 1; i < x.size(); ++i) {
    const double a = upper[i - 1] - lower[i - 1];
    const double b = upper[i] - lower[i];
    area += 0.5 * (a + b) * (x[i] - x[i - 1]);
  }
  return area;
}

}  // namespace detail

inline SparsificationReport sparsification(const std::vector<double>& uncertainties,
                                           const std::vector<double>& abs_errors,
                                           double step_fraction = 0.02,
                                           SparsificationMetric metric = SparsificationMetric::Rmse,
                                           int random_shuffles = 20,
                                           std::uint64_t random_seed = 7002) {
  if (uncertainties.size() != abs_errors.size())
    throw DimensionError("sparsification: array size mismatch");
  const size_t n = uncertainties.size();
  if (n < 10) throw std::invalid_argument("sparsification: need at least 10 samples");
  if (!(step_fraction > 0.0 && step_fraction < 1.0))
    throw std::invalid_argument("sparsification: step fraction must lie in (0,1)");

  // descending ranking with index tie-break, shared by both orderings so that
  // uncertainty == |error| reproduces the oracle exactly
  auto ranked = [n](const std::vector<double>& key) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&key](size_t a, size_t b) { return key[a] > key[b]; });
    return order;
  };
  const std::vector<size_t> by_uncertainty = ranked(uncertainties);
  const std::vector<size_t> by_error = ranked(abs_errors);

  // removal schedule: at each step drop step_fraction of what remains (>= 1)
  std::vector<size_t> removed_counts;
  size_t removed = 0;
  while (n - removed >= 2) {
    removed_counts.push_back(removed);
    const size_t k = std::max<size_t>(1, static_cast<size_t>(step_fraction * double(n - removed)));
    removed += std::min(k, n - removed - 1);
    if (removed_counts.size() > 1 && removed == removed_counts.back()) break;
  }
  removed_counts.push_back(removed);

  SparsificationReport report;
  for (size_t r : removed_counts) {
    report.fractions.push_back(double(r) / double(n));
    report.error.push_back(detail::remaining_metric(abs_errors, by_uncertainty, r, metric));
    report.oracle.push_back(detail::remaining_metric(abs_errors, by_error, r, metric));
  }
  // random baseline
  report.random.assign(removed_counts.size(), 0.0);
  Rng rng(random_seed);
  for (int s = 0; s < random_shuffles; ++s) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = n - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>(rng.uniform() * double(i + 1));
      std::swap(order[i], order[std::min(j, i)]);
    }
    for (size_t t = 0; t < removed_counts.size(); ++t)
      report.random[t] +=
          detail::remaining_metric(abs_errors, order, removed_counts[t], metric) /
          double(random_shuffles);
  }
  report.ause = detail::trapezoid_between(report.fractions, report.error, report.oracle);
  report.aurg = detail::trapezoid_between(report.fractions, report.random, report.error);
  return report;
}

// ---------------------------------------------------------------------------
// Isotonic recalibration: a nondecreasing map R on predictive CDF levels,
// fitted by pool-adjacent-violators against the empirical CDF of the
// validation u values, anchored at R(0) = 0 and R(1) = 1. Recalibrated
// two-sided intervals come from the remapped quantile levels.

struct RecalibrationMap {
  std::vector<double> knots_u;  // strictly the sorted support including 0 and 1
  std::vector<double> knots_r;  // nondecreasing fitted values

  double apply(double level) const {
    if (level <= knots_u.front()) return knots_r.front();
    if (level >= knots_u.back()) return knots_r.back();
    const auto it = std::upper_bound(knots_u.begin(), knots_u.end(), level);
    const size_t hi = static_cast<size_t>(it - knots_u.begin());
    const size_t lo = hi - 1;
    const double span = knots_u[hi] - knots_u[lo];
    if (span <= 0.0) return knots_r[lo];
    const double t = (level - knots_u[lo]) / span;
    return knots_r[lo] + t * (knots_r[hi] - knots_r[lo]);
  }

  // Smallest level whose image reaches p (flat stretches return their left edge).
  double inverse(double p) const {
    if (p <= knots_r.front()) return knots_u.front();
    if (p >= knots_r.back()) return knots_u.back();
    size_t hi = 1;
    while (hi < knots_r.size() && knots_r[hi] < p) ++hi;
    const size_t lo = hi - 1;
    const double span = knots_r[hi] - knots_r[lo];
    if (span <= 0.0) return knots_u[lo];
    const double t = (p - knots_r[lo]) / span;
    return knots_u[lo] + t * (knots_u[hi] - knots_u[lo]);
  }
};

struct RecalibrationResult {
  RecalibrationMap map;
  double ece_before = 0.0;  // one-sided ECE on the validation set
  double ece_after = 0.0;
};

inline RecalibrationResult isotonic_recalibrate(const Predictions& preds,
                                                const std::vector<double>& targets,
                                                const std::vector<double>& levels =
                                                    default_levels()) {
  if (preds.size() != targets.size())
    throw DimensionError("isotonic_recalibrate: preds/targets size mismatch");
  if (preds.size() < 20)
    throw std::invalid_argument("isotonic_recalibrate: need at least 20 validation samples");
  const size_t n = preds.size();
  std::vector<double> u(n);
  for (size_t i = 0; i < n; ++i) u[i] = predictive_cdf(preds[i], targets[i]);
  std::vector<double> sorted_u = u;
  std::sort(sorted_u.begin(), sorted_u.end());

  // pool-adjacent-violators against the midrank empirical CDF
  std::vector<double> block_value, block_weight, block_end_u;
  for (size_t i = 0; i < n; ++i) {
    double v = (double(i) + 0.5) / double(n);
    double w = 1.0;
    double end_u = sorted_u[i];
    while (!block_value.empty() && block_value.back() >= v) {
      v = (block_value.back() * block_weight.back() + v * w) / (block_weight.back() + w);
      w += block_weight.back();
      block_value.pop_back();
      block_weight.pop_back();
      block_end_u.pop_back();
    }
    block_value.push_back(v);
    block_weight.push_back(w);
    block_end_u.push_back(end_u);
  }

  RecalibrationResult result;
  result.map.knots_u.push_back(0.0);
  result.map.knots_r.push_back(0.0);
  for (size_t b = 0; b < block_value.size(); ++b) {
    const double ku = std::clamp(block_end_u[b], 0.0, 1.0);
    const double kr = std::clamp(block_value[b], 0.0, 1.0);
    if (ku > result.map.knots_u.back()) {
      result.map.knots_u.push_back(ku);
      result.map.knots_r.push_back(std::max(kr, result.map.knots_r.back()));
    } else {
      result.map.knots_r.back() = std::max(result.map.knots_r.back(), kr);
    }
  }
  if (result.map.knots_u.back() < 1.0) {
    result.map.knots_u.push_back(1.0);
    result.map.knots_r.push_back(1.0);
  } else {
    result.map.knots_r.back() = 1.0;
  }

  // one-sided calibration before and after on the validation set
  auto one_sided_ece = [&](const std::vector<double>& values) {
    double total = 0.0;
    for (double c : levels) {
      long inside = 0;
      for (double v : values)
        if (v <= c) ++inside;
      total += std::abs(double(inside) / double(n) - c);
    }
    return total / double(levels.size());
  };
  std::vector<double> remapped(n);
  for (size_t i = 0; i < n; ++i) remapped[i] = result.map.apply(u[i]);
  result.ece_before = one_sided_ece(u);
  result.ece_after = one_sided_ece(remapped);
  return result;
}

// Two-sided interval at confidence c rebuilt from recalibrated quantiles.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline Interval recalibrated_interval(const RecalibrationMap& map, const GaussianPrediction& p,
                                      double c) {
  const double lo_level = map.inverse(0.5 * (1.0 - c));
  const double hi_level = map.inverse(0.5 * (1.0 + c));
  const double sigma = p.std_total();
  auto quantile = [&](double level) {
    const double clamped = std::clamp(level, 1e-12, 1.0 - 1e-12);
    return p.mean + sigma * normal_quantile(clamped);
  };
  return {quantile(lo_level), quantile(hi_level)};
}

// ---------------------------------------------------------------------------
// Report assembly and the documented CSV/JSON emission formats.

struct EvaluationReport {
  CalibrationCurve calibration;
  double ece_uniform = 0.0;
  double ece_count = 0.0;
  double miscalibration = 0.0;
  double nll_mean = 0.0;           // constant omitted
  double nll_mean_constant = 0.0;  // with the 1/2 log 2 pi constant
  double u_pool_area = 0.0;
  SparsificationReport sparsification;
};

inline EvaluationReport evaluate_predictions(const Predictions& preds,
                                             const std::vector<double>& targets,
                                             const std::vector<double>& levels = default_levels(),
                                             double sparsification_step = 0.02) {
  EvaluationReport report;
  report.calibration = regression_calibration(preds, targets, levels);
  report.ece_uniform = ece(report.calibration, EceWeighting::Uniform);
  report.ece_count = ece(report.calibration, EceWeighting::Count);
  report.miscalibration = miscalibration_area(report.calibration);
  report.nll_mean = nll(preds, targets, false);
  report.nll_mean_constant = nll(preds, targets, true);
  report.u_pool_area = u_pool(preds, targets).area;
  std::vector<double> unc(preds.size()), err(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    unc[i] = preds[i].variance_total;
    err[i] = std::abs(targets[i] - preds[i].mean);
  }
  report.sparsification = sparsification(unc, err, sparsification_step);
  return report;
}

inline nlohmann::json evaluation_report_to_json(const EvaluationReport& r) {
  nlohmann::json j;
  j["calibration"] = {{"levels", r.calibration.levels},
                      {"observed", r.calibration.observed},
                      {"weights", r.calibration.weights}};
  j["ece"] = r.ece_uniform;
  j["ece_count_weighted"] = r.ece_count;
  j["miscalibration_area"] = r.miscalibration;
  j["nll"] = r.nll_mean;                        // constant omitted
  j["nll_with_constant"] = r.nll_mean_constant; // includes 1/2 log 2 pi per sample
  j["u_pool_area"] = r.u_pool_area;
  j["sparsification"] = {{"ause", r.sparsification.ause}, {"aurg", r.sparsification.aurg}};
  return j;
}

// columns: level, observed, weight
inline void write_calibration_csv(std::ostream& os, const CalibrationCurve& curve) {
  os << "level,observed,weight\n";
  os.precision(17);
  for (size_t j = 0; j < curve.levels.size(); ++j) {
    os << curve.levels[j] << ',';
    if (std::isnan(curve.observed[j]))
      os << "";
    else
      os << curve.observed[j];
    os << ',' << curve.weights[j] << '\n';
  }
}

// columns: fraction, rmse, oracle, random
inline void write_sparsification_csv(std::ostream& os, const SparsificationReport& r) {
  os << "fraction,rmse,oracle,random\n";
  os.precision(17);
  for (size_t i = 0; i < r.fractions.size(); ++i)
    os << r.fractions[i] << ',' << r.error[i] << ',' << r.oracle[i] << ',' << r.random[i] << '\n';
}

}  // namespace uqkit
