#pragma once

// Configuration schema, model bundles, and the train/predict plumbing behind
// the command-line front end.
//
// A model bundle is a directory holding manifest.json (schema version, method,
// seed, data contract) plus method-specific files; standardization records
// travel with the bundle so predictions always return in the original units.

#include "uqkit/acquisition.hpp"
#include "uqkit/bnn.hpp"
#include "uqkit/data.hpp"
#include "uqkit/ensemble.hpp"
#include "uqkit/evaluation.hpp"
#include "uqkit/gpr.hpp"
#include "uqkit/kernels.hpp"
#include "uqkit/nnet.hpp"
#include "uqkit/sngp.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace uqkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kSchemaVersion = 1;

class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Strict key validation: unknown keys are rejected before any work happens.

inline void require_keys_subset(const json& obj, const std::string& where,
                                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw SchemaError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw SchemaError("invalid value for '" + key + "'");
  }
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct DatasetConfig {
  std::string type;  // toy1d | toy2d | csv
  Eigen::Index n = 8;
  std::uint64_t seed = 0;
  double noise_std = 0.1;
  double range_lo = -4.0, range_hi = 4.0;
  bool heteroscedastic = false;
  std::string path;
  std::string target = "y";
};

struct ExperimentConfig {
  std::string method;
  std::uint64_t seed = 0;
  bool standardize = false;
  DatasetConfig dataset;
  json method_params;  // the validated method-specific block
};

inline const std::set<std::string>& known_methods() {
  static const std::set<std::string> methods = {"gpr",  "ensemble", "mc_dropout", "mfvi",
                                                "mh",   "svgd",     "sngp",       "dnn_gpr"};
  return methods;
}

inline DatasetConfig parse_dataset_config(const json& j) {
  DatasetConfig cfg;
  if (!j.contains("type")) throw SchemaError("dataset: missing 'type'");
  cfg.type = j.at("type").get<std::string>();
  if (cfg.type == "toy1d") {
    require_keys_subset(j, "dataset", {"type", "n", "seed", "noise_std", "range"});
    cfg.n = get_or<Eigen::Index>(j, "n", 8);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    cfg.noise_std = get_or<double>(j, "noise_std", 0.1);
    if (j.contains("range")) {
      const auto range = j.at("range").get<std::vector<double>>();
      if (range.size() != 2) throw SchemaError("dataset.range: expected [lo, hi]");
      cfg.range_lo = range[0];
      cfg.range_hi = range[1];
    }
  } else if (cfg.type == "toy2d") {
    require_keys_subset(j, "dataset", {"type", "n", "seed", "heteroscedastic"});
    cfg.n = get_or<Eigen::Index>(j, "n", 800);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    cfg.heteroscedastic = get_or<bool>(j, "heteroscedastic", false);
  } else if (cfg.type == "csv") {
    require_keys_subset(j, "dataset", {"type", "path", "target"});
    if (!j.contains("path")) throw SchemaError("dataset: csv type needs 'path'");
    cfg.path = j.at("path").get<std::string>();
    cfg.target = get_or<std::string>(j, "target", std::string("y"));
  } else {
    throw SchemaError("dataset: unknown type '" + cfg.type + "'");
  }
  return cfg;
}

inline void validate_method_params(const std::string& method, const json& p) {
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"gpr", {"kernel", "noise_std", "optimize", "restarts", "optimize_noise"}},
      {"ensemble",
       {"members", "width", "blocks", "activation", "dropout_rate", "epochs", "learning_rate",
        "batch_size", "optimizer"}},
      {"mc_dropout",
       {"width", "blocks", "activation", "dropout_rate", "epochs", "learning_rate", "batch_size",
        "passes", "optimizer"}},
      {"mfvi",
       {"hidden_width", "prior_std", "noise_std", "n_mc", "epochs", "learning_rate",
        "predict_samples"}},
      {"mh",
       {"hidden_width", "prior_std", "noise_std", "steps", "proposal_std", "burn_in_fraction",
        "thin", "adapt"}},
      {"svgd", {"hidden_width", "prior_std", "noise_std", "particles", "steps", "learning_rate"}},
      {"sngp",
       {"width", "blocks", "gamma", "rff_features", "sigma_f", "length_scale", "noise_std",
        "cov_momentum", "epochs", "learning_rate", "batch_size"}},
      {"dnn_gpr",
       {"width", "blocks", "activation", "epochs", "learning_rate", "batch_size", "optimizer",
        "kernel", "noise_std", "optimize", "restarts"}},
  };
  require_keys_subset(p, method, allowed.at(method));
  if (p.contains("kernel"))
    require_keys_subset(p.at("kernel"), method + ".kernel",
                        {"family", "nu", "sigma_f", "length_scales"});
}

inline ExperimentConfig parse_experiment_config(const json& j) {
  std::set<std::string> top = {"method", "seed", "standardize", "dataset"};
  for (const std::string& m : known_methods()) top.insert(m);
  require_keys_subset(j, "config", top);
  ExperimentConfig cfg;
  if (!j.contains("method")) throw SchemaError("config: missing 'method'");
  cfg.method = j.at("method").get<std::string>();
  if (!known_methods().count(cfg.method))
    throw SchemaError("config: unknown method '" + cfg.method + "'");
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.standardize = get_or<bool>(j, "standardize", false);
  if (!j.contains("dataset")) throw SchemaError("config: missing 'dataset'");
  cfg.dataset = parse_dataset_config(j.at("dataset"));
  // method blocks other than the selected one are rejected
  for (const std::string& m : known_methods()) {
    if (m != cfg.method && j.contains(m))
      throw SchemaError("config: block '" + m + "' does not match method '" + cfg.method + "'");
  }
  cfg.method_params = j.contains(cfg.method) ? j.at(cfg.method) : json::object();
  validate_method_params(cfg.method, cfg.method_params);
  return cfg;
}

inline Dataset load_dataset(const DatasetConfig& cfg) {
  if (cfg.type == "toy1d")
    return gen_toy_1d(cfg.n, cfg.range_lo, cfg.range_hi, cfg.seed, cfg.noise_std);
  if (cfg.type == "toy2d") {
    const Eigen::Index per_cluster = std::max<Eigen::Index>(1, cfg.n / 2);
    return gen_toy_2d_clusters(per_cluster, cfg.seed, cfg.heteroscedastic);
  }
  return load_csv_file(cfg.path, cfg.target);
}

// ---------------------------------------------------------------------------
// File helpers

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("invalid JSON in '" + path.string() + "': " + e.what());
  }
  return j;
}

inline void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Network spec builders shared by the training paths

inline Activation parse_activation(const json& p, const char* fallback = "relu") {
  return activation_from_name(get_or<std::string>(p, "activation", std::string(fallback)));
}

inline Optimizer parse_optimizer(const json& p) {
  const std::string name = get_or<std::string>(p, "optimizer", std::string("adam"));
  if (name == "adam") return Optimizer::Adam;
  if (name == "sgd") return Optimizer::Sgd;
  throw SchemaError("optimizer must be 'adam' or 'sgd'");
}

inline NetworkSpec bnn_spec(Eigen::Index input_dim, int hidden_width) {
  NetworkSpec spec;
  spec.input_dim = static_cast<int>(input_dim);
  spec.layers = {Layer::dense(hidden_width, Activation::Tanh), Layer::scalar_output()};
  return spec;
}

// zero-padded index names for bundle members and sweep entries
inline std::string indexed_name(const std::string& prefix, size_t i, const std::string& suffix) {
  std::string digits = std::to_string(i);
  while (digits.size() < 3) digits.insert(digits.begin(), '0');
  return prefix + digits + suffix;
}

// ---------------------------------------------------------------------------
// The trained-model bundle

struct ModelBundle {
  json manifest;
  fs::path dir;

  std::string method() const { return manifest.at("method").get<std::string>(); }
};

struct TrainedModel {
  std::string method;
  std::uint64_t seed = 0;
  std::optional<StandardizationRecord> standardization;
  std::vector<std::string> feature_names;
  std::string target_name;

  // exactly one of these is populated, matching `method`
  std::optional<GpModel> gpr;
  std::optional<EnsembleModel> ensemble;
  std::optional<Network> network;      // mc_dropout
  int mc_passes = 15;
  std::optional<MfviPosterior> mfvi;
  std::optional<Matrix> samples;       // mh / svgd parameter samples
  std::optional<NetworkSpec> bnn_net;  // spec backing mfvi / mh / svgd
  double bnn_noise_std = 0.1;
  double bnn_prior_std = 1.0;
  int bnn_predict_samples = 200;
  std::optional<SngpModel> sngp;
  std::optional<DnnGprModel> dnn_gpr;
};

// ---------------------------------------------------------------------------
// Training per method

inline TrainedModel train_experiment(const ExperimentConfig& cfg) {
  TrainedModel model;
  model.method = cfg.method;
  model.seed = cfg.seed;

  Dataset raw = load_dataset(cfg.dataset);
  model.feature_names = raw.feature_names;
  model.target_name = raw.target_name;
  Dataset data = raw;
  if (cfg.standardize) {
    const StandardizationRecord rec = standardization_fit(raw);
    model.standardization = rec;
    data = standardization_apply(raw, rec);
  }
  const json& p = cfg.method_params;
  Rng rng(cfg.seed);

  if (cfg.method == "gpr") {
    KernelSpec kernel = KernelSpec::squared_exponential(1.0, 1.0);
    if (p.contains("kernel")) kernel = kernel_from_json(p.at("kernel"));
    GpFitOptions opt;
    opt.noise_std = get_or<double>(p, "noise_std", 0.1);
    opt.optimize = get_or<bool>(p, "optimize", true);
    opt.restarts = get_or<int>(p, "restarts", 4);
    opt.optimize_noise = get_or<bool>(p, "optimize_noise", true);
    model.gpr = gp_fit(data.x, data.y, kernel, opt, rng);
  } else if (cfg.method == "ensemble") {
    const NetworkSpec spec =
        presets::resnet(static_cast<int>(data.dim()), get_or<int>(p, "width", 32),
                        get_or<int>(p, "blocks", 2), parse_activation(p),
                        get_or<double>(p, "dropout_rate", 0.0), 0.0, /*gaussian=*/true);
    TrainConfig tc;
    tc.loss = LossKind::Nll;
    tc.optimizer = parse_optimizer(p);
    tc.epochs = get_or<int>(p, "epochs", 300);
    tc.learning_rate = get_or<double>(p, "learning_rate", 5e-3);
    tc.batch_size = get_or<int>(p, "batch_size", 32);
    model.ensemble = train_ensemble(spec, data.x, data.y, get_or<int>(p, "members", 15), tc,
                                    cfg.seed);
  } else if (cfg.method == "mc_dropout") {
    const NetworkSpec spec =
        presets::resnet(static_cast<int>(data.dim()), get_or<int>(p, "width", 32),
                        get_or<int>(p, "blocks", 3), parse_activation(p),
                        get_or<double>(p, "dropout_rate", 0.1), 0.0, /*gaussian=*/false);
    TrainConfig tc;
    tc.loss = LossKind::Mse;
    tc.optimizer = parse_optimizer(p);
    tc.epochs = get_or<int>(p, "epochs", 500);
    tc.learning_rate = get_or<double>(p, "learning_rate", 5e-3);
    tc.batch_size = get_or<int>(p, "batch_size", 32);
    tc.seed = rng.child(1).next_u64();
    Rng init_rng = rng.child(0);
    Network net = make_network(spec, init_rng);
    model.network = train(std::move(net), data.x, data.y, tc).net;
    model.mc_passes = get_or<int>(p, "passes", 15);
  } else if (cfg.method == "mfvi" || cfg.method == "mh" || cfg.method == "svgd") {
    const NetworkSpec spec = bnn_spec(data.dim(), get_or<int>(p, "hidden_width", 8));
    model.bnn_net = spec;
    model.bnn_prior_std = get_or<double>(p, "prior_std", 1.0);
    model.bnn_noise_std = get_or<double>(p, "noise_std", 0.1);
    LogPosterior lp = LogPosterior::for_network(spec, data.x, data.y, model.bnn_prior_std,
                                                model.bnn_noise_std);
    if (cfg.method == "mfvi") {
      Rng fit_rng = rng.child(0);
      const MfviResult result =
          mfvi_fit(lp, MfviPosterior::init(lp.dim(), 0.0, 0.1), get_or<int>(p, "n_mc", 4),
                   get_or<int>(p, "epochs", 2000), get_or<double>(p, "learning_rate", 0.01),
                   fit_rng);
      model.mfvi = result.posterior;
      model.bnn_predict_samples = get_or<int>(p, "predict_samples", 200);
    } else if (cfg.method == "mh") {
      Rng chain_rng = rng.child(0);
      MhOptions mh_opt;
      mh_opt.adapt = get_or<bool>(p, "adapt", true);
      const long steps = get_or<long>(p, "steps", 20000);
      const MhResult result =
          mh_sample(as_log_density(lp), Vector::Zero(lp.dim()), steps,
                    get_or<double>(p, "proposal_std", 0.05), chain_rng, mh_opt);
      const double burn = get_or<double>(p, "burn_in_fraction", 0.5);
      const long thin = get_or<long>(p, "thin", 10);
      const long start = static_cast<long>(burn * double(steps));
      std::vector<long> keep;
      for (long s = start; s < steps; s += thin) keep.push_back(s);
      Matrix samples(static_cast<Eigen::Index>(keep.size()), lp.dim());
      for (size_t i = 0; i < keep.size(); ++i) samples.row(i) = result.chain.row(keep[i]);
      model.samples = samples;
    } else {
      Rng init_rng = rng.child(0);
      const int np = get_or<int>(p, "particles", 30);
      Matrix particles(np, lp.dim());
      for (int i = 0; i < np; ++i)
        particles.row(i) = (model.bnn_prior_std * init_rng.normal_vector(lp.dim())).transpose();
      model.samples = svgd_run(std::move(particles), as_log_density(lp),
                               get_or<int>(p, "steps", 300),
                               get_or<double>(p, "learning_rate", 0.05));
    }
  } else if (cfg.method == "sngp") {
    NetworkSpec spec;
    spec.input_dim = static_cast<int>(data.dim());
    const int width = get_or<int>(p, "width", 32);
    const int blocks = get_or<int>(p, "blocks", 2);
    const double gamma = get_or<double>(p, "gamma", 0.9);
    spec.layers.push_back(Layer::spectral_dense(width, Activation::Relu, gamma));
    for (int b = 0; b < blocks; ++b)
      spec.layers.push_back(Layer::residual(width, Activation::Relu, gamma));
    SngpFitOptions opt;
    opt.rff_features = get_or<Eigen::Index>(p, "rff_features", 1024);
    opt.sigma_f = get_or<double>(p, "sigma_f", 1.0);
    opt.length_scale = get_or<double>(p, "length_scale", 0.0);
    opt.noise_std = get_or<double>(p, "noise_std", 0.1);
    opt.cov_momentum = get_or<double>(p, "cov_momentum", -1.0);
    opt.train.epochs = get_or<int>(p, "epochs", 100);
    opt.train.learning_rate = get_or<double>(p, "learning_rate", 1e-3);
    opt.train.batch_size = get_or<int>(p, "batch_size", 32);
    opt.train.seed = rng.child(9).next_u64();
    model.sngp = sngp_fit(spec, data.x, data.y, gamma, opt, rng);
  } else if (cfg.method == "dnn_gpr") {
    const NetworkSpec spec =
        presets::resnet(static_cast<int>(data.dim()), get_or<int>(p, "width", 32),
                        get_or<int>(p, "blocks", 2), parse_activation(p), 0.0, 0.0,
                        /*gaussian=*/false);
    TrainConfig tc;
    tc.loss = LossKind::Mse;
    tc.optimizer = parse_optimizer(p);
    tc.epochs = get_or<int>(p, "epochs", 200);
    tc.learning_rate = get_or<double>(p, "learning_rate", 5e-3);
    tc.batch_size = get_or<int>(p, "batch_size", 32);
    tc.seed = rng.child(1).next_u64();
    Rng init_rng = rng.child(0);
    Network backbone = make_network(spec, init_rng);
    backbone = train(std::move(backbone), data.x, data.y, tc).net;
    KernelSpec kernel = KernelSpec::squared_exponential(1.0, 1.0);
    if (p.contains("kernel")) kernel = kernel_from_json(p.at("kernel"));
    GpFitOptions opt;
    opt.noise_std = get_or<double>(p, "noise_std", 0.1);
    opt.optimize = get_or<bool>(p, "optimize", true);
    opt.restarts = get_or<int>(p, "restarts", 2);
    Rng gp_rng = rng.child(2);
    model.dnn_gpr = dnn_gpr_fit(backbone, data.x, data.y, kernel, opt, gp_rng);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Bundle save / load

inline void save_bundle(const TrainedModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["method"] = model.method;
  manifest["seed"] = model.seed;
  manifest["feature_names"] = model.feature_names;
  manifest["target_name"] = model.target_name;
  manifest["standardized"] = model.standardization.has_value();
  if (model.standardization)
    write_json_file(dir / "standardization.json", standardization_to_json(*model.standardization));

  if (model.gpr) {
    write_json_file(dir / "gpr.json", gp_to_json(*model.gpr));
  } else if (model.ensemble) {
    fs::create_directories(dir / "members");
    manifest["members"] = model.ensemble->members.size();
    for (size_t i = 0; i < model.ensemble->members.size(); ++i) {
      write_json_file(dir / "members" / indexed_name("member_", i, ".json"),
                      network_to_json(model.ensemble->members[i]));
    }
  } else if (model.network) {
    json j = network_to_json(*model.network);
    j["passes"] = model.mc_passes;
    write_json_file(dir / "network.json", j);
  } else if (model.mfvi || model.samples) {
    json j;
    j["spec"] = network_spec_to_json(*model.bnn_net);
    j["noise_std"] = model.bnn_noise_std;
    j["prior_std"] = model.bnn_prior_std;
    j["predict_samples"] = model.bnn_predict_samples;
    if (model.mfvi) {
      j["mu"] = std::vector<double>(model.mfvi->mu.data(),
                                    model.mfvi->mu.data() + model.mfvi->mu.size());
      j["log_sigma"] = std::vector<double>(
          model.mfvi->log_sigma.data(), model.mfvi->log_sigma.data() + model.mfvi->log_sigma.size());
    }
    write_json_file(dir / "bnn.json", j);
    if (model.samples) {
      std::ostringstream os;
      Rng tmp_rng(0);
      Network proto = make_network(*model.bnn_net, tmp_rng);
      write_samples_csv(os, *model.samples, theta_column_names(proto));
      write_text_file(dir / "samples.csv", os.str());
    }
  } else if (model.sngp) {
    write_json_file(dir / "sngp.json", sngp_to_json(*model.sngp));
  } else if (model.dnn_gpr) {
    json j;
    j["extractor"] = network_to_json(model.dnn_gpr->extractor);
    j["gp"] = gp_to_json(model.dnn_gpr->gp);
    write_json_file(dir / "dnn_gpr.json", j);
  }
  write_json_file(dir / "manifest.json", manifest);
}

inline TrainedModel load_bundle(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  if (get_or<int>(manifest, "schema_version", -1) != kSchemaVersion)
    throw SchemaError("bundle: unsupported schema version");
  TrainedModel model;
  model.method = manifest.at("method").get<std::string>();
  model.seed = get_or<std::uint64_t>(manifest, "seed", 0);
  model.feature_names = get_or<std::vector<std::string>>(manifest, "feature_names", {});
  model.target_name = get_or<std::string>(manifest, "target_name", std::string("y"));
  if (get_or<bool>(manifest, "standardized", false))
    model.standardization =
        standardization_from_json(read_json_file(dir / "standardization.json"));

  if (model.method == "gpr") {
    model.gpr = gp_from_json(read_json_file(dir / "gpr.json"));
  } else if (model.method == "ensemble") {
    EnsembleModel ensemble;
    const size_t members = manifest.at("members").get<size_t>();
    for (size_t i = 0; i < members; ++i) {
      ensemble.members.push_back(network_from_json(
          read_json_file(dir / "members" / indexed_name("member_", i, ".json"))));
    }
    model.ensemble = std::move(ensemble);
  } else if (model.method == "mc_dropout") {
    const json j = read_json_file(dir / "network.json");
    model.network = network_from_json(j);
    model.mc_passes = get_or<int>(j, "passes", 15);
  } else if (model.method == "mfvi" || model.method == "mh" || model.method == "svgd") {
    const json j = read_json_file(dir / "bnn.json");
    model.bnn_net = network_spec_from_json(j.at("spec"));
    model.bnn_noise_std = j.at("noise_std").get<double>();
    model.bnn_prior_std = j.at("prior_std").get<double>();
    model.bnn_predict_samples = get_or<int>(j, "predict_samples", 200);
    if (model.method == "mfvi") {
      MfviPosterior q;
      const auto mu = j.at("mu").get<std::vector<double>>();
      const auto ls = j.at("log_sigma").get<std::vector<double>>();
      q.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
      q.log_sigma = Eigen::Map<const Vector>(ls.data(), static_cast<Eigen::Index>(ls.size()));
      model.mfvi = q;
    } else {
      std::ifstream in(dir / "samples.csv");
      if (!in) throw DataError("bundle: missing samples.csv");
      std::string line;
      std::getline(in, line);  // header
      std::vector<std::vector<double>> rows;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
      }
      Matrix samples(static_cast<Eigen::Index>(rows.size()),
                     rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (size_t i = 0; i < rows.size(); ++i)
        for (size_t c = 0; c < rows[i].size(); ++c)
          samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
      model.samples = samples;
    }
  } else if (model.method == "sngp") {
    model.sngp = sngp_from_json(read_json_file(dir / "sngp.json"));
  } else if (model.method == "dnn_gpr") {
    const json j = read_json_file(dir / "dnn_gpr.json");
    DnnGprModel dk;
    dk.extractor = network_from_json(j.at("extractor"));
    dk.gp = gp_from_json(j.at("gp"));
    model.dnn_gpr = std::move(dk);
  } else {
    throw SchemaError("bundle: unknown method '" + model.method + "'");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Prediction through any bundle. Inputs arrive in original units; outputs are
// mapped back through the stored standardization record. The per-row rng
// children keep stochastic methods deterministic and row-order independent.

struct PredictionRow {
  GaussianPrediction pred;
  std::optional<double> dist_train;  // populated for gpr bundles
};

inline std::vector<PredictionRow> predict_rows(const TrainedModel& model, const Matrix& x_raw) {
  Matrix x = x_raw;
  if (model.standardization) x = standardize_features(x_raw, *model.standardization);
  const Eigen::Index n = x.rows();
  std::vector<PredictionRow> rows(static_cast<size_t>(n));
  Rng root(model.seed ^ 0x9e3779b97f4a7c15ULL);

  if (model.gpr) {
    const Predictions preds = gp_predict(*model.gpr, x, true);
    for (Eigen::Index i = 0; i < n; ++i) {
      rows[i].pred = preds[i];
      rows[i].dist_train = gp_distance_to_train(*model.gpr, x.row(i).transpose());
    }
  } else if (model.ensemble) {
    for (Eigen::Index i = 0; i < n; ++i)
      rows[i].pred = ensemble_predict(*model.ensemble, x.row(i).transpose());
  } else if (model.network) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Rng row_rng = root.child(static_cast<std::uint64_t>(i));
      rows[i].pred =
          mc_dropout_predict(*model.network, x.row(i).transpose(), model.mc_passes, row_rng);
    }
  } else if (model.mfvi || model.samples) {
    LogPosterior lp = LogPosterior::for_network(*model.bnn_net, Matrix(0, x.cols()), Vector(0),
                                                model.bnn_prior_std, model.bnn_noise_std);
    if (model.mfvi) {
      for (Eigen::Index i = 0; i < n; ++i) {
        Rng row_rng = root.child(static_cast<std::uint64_t>(i));
        rows[i].pred = posterior_predict(*model.mfvi, lp, x.row(i).transpose(),
                                         PredictMode::Predictive, model.bnn_predict_samples,
                                         row_rng);
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        rows[i].pred =
            posterior_predict(*model.samples, lp, x.row(i).transpose(), PredictMode::Predictive);
    }
  } else if (model.sngp) {
    for (Eigen::Index i = 0; i < n; ++i)
      rows[i].pred = sngp_predict(*model.sngp, x.row(i).transpose());
  } else if (model.dnn_gpr) {
    const Predictions preds = dnn_gpr_predict(*model.dnn_gpr, x, true);
    for (Eigen::Index i = 0; i < n; ++i) rows[i].pred = preds[i];
  }

  if (model.standardization) {
    const double t_std = model.standardization->target_std;
    const double t_mean = model.standardization->target_mean;
    for (auto& row : rows) {
      GaussianPrediction& p = row.pred;
      p.mean = p.mean * t_std + t_mean;
      p.variance_total *= t_std * t_std;
      p.variance_aleatory *= t_std * t_std;
      p.variance_epistemic *= t_std * t_std;
    }
  }
  return rows;
}

// columns: mean, var_total, var_aleatory, var_epistemic, split_available
// (gpr bundles append dist_train: the distance to the training set is the
// caller's signal for when the saturated variance stops being trustworthy)
inline void write_predictions_csv(std::ostream& os, const std::vector<PredictionRow>& rows) {
  const bool with_dist = !rows.empty() && rows.front().dist_train.has_value();
  os << "mean,var_total,var_aleatory,var_epistemic,split_available";
  if (with_dist) os << ",dist_train";
  os << '\n';
  os.precision(17);
  for (const auto& row : rows) {
    const GaussianPrediction& p = row.pred;
    os << p.mean << ',' << p.variance_total << ',' << p.variance_aleatory << ','
       << p.variance_epistemic << ',' << (p.split_available ? 1 : 0);
    if (with_dist) os << ',' << *row.dist_train;
    os << '\n';
  }
}

inline std::vector<PredictionRow> read_predictions_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty predictions file");
  const auto header = detail::split_csv_line(line);
  std::map<std::string, size_t> index;
  for (size_t c = 0; c < header.size(); ++c) index[detail::trim(header[c])] = c;
  for (const char* required : {"mean", "var_total", "var_aleatory", "var_epistemic"})
    if (!index.count(required))
      throw DataError(std::string("predictions file: missing column '") + required + "'");
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    PredictionRow row;
    row.pred.mean = std::stod(cells.at(index.at("mean")));
    row.pred.variance_total = std::stod(cells.at(index.at("var_total")));
    row.pred.variance_aleatory = std::stod(cells.at(index.at("var_aleatory")));
    row.pred.variance_epistemic = std::stod(cells.at(index.at("var_epistemic")));
    if (index.count("split_available"))
      row.pred.split_available = std::stod(cells.at(index.at("split_available"))) != 0.0;
    rows.push_back(row);
  }
  if (rows.empty()) throw DataError("predictions file has no rows");
  return rows;
}

// Features for prediction: all non-target columns of the CSV, in file order.
inline Matrix load_feature_matrix(const fs::path& path, const std::string& target_name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file");
  const auto header = detail::split_csv_line(line);
  bool has_target = false;
  for (const auto& h : header)
    if (detail::trim(h) == target_name) has_target = true;
  if (has_target) {
    in.seekg(0);
    Dataset ds = load_csv(in, target_name);
    return ds.x;
  }
  // no target column: parse everything as features via a synthetic target
  std::stringstream patched;
  patched << detail::trim(line) << ",__target__\n";
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    patched << line << ",0\n";
  }
  Dataset ds = load_csv(patched, "__target__");
  return ds.x;
}

inline std::vector<double> load_target_vector(const fs::path& path, const std::string& target) {
  Dataset ds = load_csv_file(path.string(), target);
  return std::vector<double>(ds.y.data(), ds.y.data() + ds.y.size());
}

}  // namespace uqkit::cli
