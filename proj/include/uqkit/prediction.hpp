#pragma once

// GaussianPrediction: per-point predictive mean and variance with the
// aleatory/epistemic split. The universal output currency of every method.

#include <algorithm>
#include <cmath>
#include <vector>

namespace uqkit {

struct GaussianPrediction {
  double mean = 0.0;
  double variance_total = 0.0;
  double variance_aleatory = 0.0;
  double variance_epistemic = 0.0;
  // False when a method cannot separate the two components (e.g. MC dropout
  // on a scalar-output network); variance_total is still meaningful.
  bool split_available = true;

  double std_total() const { return std::sqrt(std::max(variance_total, 0.0)); }

  // Build from the split; tiny negative variances from roundoff are clamped.
  static GaussianPrediction from_split(double mean, double aleatory, double epistemic) {
    GaussianPrediction p;
    p.mean = mean;
    p.variance_aleatory = clamp_variance(aleatory);
    p.variance_epistemic = clamp_variance(epistemic);
    p.variance_total = p.variance_aleatory + p.variance_epistemic;
    return p;
  }

  static GaussianPrediction total_only(double mean, double total) {
    GaussianPrediction p;
    p.mean = mean;
    p.variance_total = clamp_variance(total);
    p.variance_aleatory = 0.0;
    p.variance_epistemic = p.variance_total;
    p.split_available = false;
    return p;
  }

  static double clamp_variance(double v) { return v < 0.0 ? 0.0 : v; }
};

using Predictions = std::vector<GaussianPrediction>;

}  // namespace uqkit
