#pragma once

// Deep ensembles of Gaussian-output networks: members share one architecture
// and train independently with derived seeds (random init + shuffling); the
// per-point aggregate is the moment-matched single Gaussian of the
// equal-weight mixture, which splits the predictive variance into its
// aleatory (mean member variance) and epistemic (variance of member means)
// components by the law of total variance.

#include "uqkit/nnet.hpp"
#include "uqkit/numerics.hpp"
#include "uqkit/prediction.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <vector>

namespace uqkit {

struct EnsembleModel {
  std::vector<Network> members;
  TrainConfig config;

  Eigen::Index size() const { return static_cast<Eigen::Index>(members.size()); }
};

// Aleatory/epistemic decomposition of member predictions (mu_m, sigma2_m):
// aleatory = E_m[sigma2], epistemic = Var_m[mu].
struct Decomposition {
  double aleatory = 0.0;
  double epistemic = 0.0;
};

inline Decomposition decompose(const std::vector<std::pair<double, double>>& member_predictions) {
  if (member_predictions.empty())
    throw std::invalid_argument("decompose: need at least one member prediction");
  const double m = static_cast<double>(member_predictions.size());
  double mean = 0.0, mean_sq = 0.0, mean_var = 0.0;
  for (const auto& [mu, var] : member_predictions) {
    mean += mu / m;
    mean_sq += mu * mu / m;
    mean_var += var / m;
  }
  Decomposition d;
  d.aleatory = mean_var;
  d.epistemic = mean_sq - mean * mean;
  return d;
}

// Moment-matched Gaussian of the equal-weight member mixture.
inline GaussianPrediction aggregate_members(
    const std::vector<std::pair<double, double>>& member_predictions) {
  const Decomposition d = decompose(member_predictions);
  double mean = 0.0;
  for (const auto& [mu, var] : member_predictions)
    mean += mu / static_cast<double>(member_predictions.size());
  return GaussianPrediction::from_split(mean, d.aleatory, d.epistemic);
}

// Member i is initialized and shuffled from the child stream (master_seed, i);
// all members see the full dataset (no bagging).
inline EnsembleModel train_ensemble(const NetworkSpec& spec, const Matrix& x, const Vector& y,
                                    int n_members, const TrainConfig& config,
                                    std::uint64_t master_seed) {
  if (n_members < 1) throw std::invalid_argument("train_ensemble: need at least one member");
  detail::validate_spec(spec, true);
  if (spec.layers.back().kind != Layer::Kind::GaussianOutput)
    throw std::invalid_argument("train_ensemble: members need a Gaussian output layer");
  EnsembleModel model;
  model.config = config;
  model.members.reserve(static_cast<size_t>(n_members));
  Rng master(master_seed);
  for (int i = 0; i < n_members; ++i) {
    Rng member_rng = master.child(static_cast<std::uint64_t>(i));
    Network net = make_network(spec, member_rng);
    TrainConfig cfg = config;
    cfg.seed = member_rng.next_u64();  // drives shuffling and dropout
    try {
      TrainResult result = train(std::move(net), x, y, cfg);
      model.members.push_back(std::move(result.net));
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.epoch(), "ensemble member " + std::to_string(i));
    }
  }
  return model;
}

inline GaussianPrediction ensemble_predict(const EnsembleModel& model,
                                           const Eigen::Ref<const Vector>& x) {
  if (model.members.empty()) throw std::invalid_argument("ensemble_predict: empty ensemble");
  std::vector<std::pair<double, double>> preds;
  preds.reserve(model.members.size());
  for (const Network& net : model.members) {
    const NetOutput out = forward(net, x, ForwardKind::Eval);
    preds.emplace_back(out.mean, out.has_variance ? out.variance : 0.0);
  }
  return aggregate_members(preds);
}

// ---------------------------------------------------------------------------
// Serialization: a manifest plus one JSON per member (the CLI stores members
// as separate files in a bundle directory; this in-memory form backs it).

inline nlohmann::json ensemble_to_json(const EnsembleModel& model) {
  nlohmann::json j;
  j["members"] = nlohmann::json::array();
  for (const Network& net : model.members) j["members"].push_back(network_to_json(net));
  return j;
}

inline EnsembleModel ensemble_from_json(const nlohmann::json& j) {
  EnsembleModel model;
  for (const auto& jm : j.at("members")) model.members.push_back(network_from_json(jm));
  if (model.members.empty()) throw std::invalid_argument("ensemble_from_json: no members");
  return model;
}

}  // namespace uqkit
