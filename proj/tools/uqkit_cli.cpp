// Batch command-line front end: generate toy data, train any method, predict,
// build 2D uncertainty maps, evaluate predictions, recalibrate, refine a GPR
// surrogate with an acquisition function, and sweep configuration grids.
//
// Every command is a pure function of (config, input files, seed) to output
// files. Exit codes: 0 success, 2 configuration/schema violation, 3 data
// error, 4 numeric divergence. Failures print a single-line JSON error object
// to stdout.

#include "cli_support.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <future>
#include <iostream>
#include <sstream>

namespace {

using namespace uqkit;
using namespace uqkit::cli;
using nlohmann::json;

// ---------------------------------------------------------------------------
// gen-toy

int cmd_gen_toy(const std::string& kind, long n, std::uint64_t seed, const std::string& out,
                double noise_std, std::vector<double> range, bool heteroscedastic) {
  Dataset ds;
  if (kind == "1d") {
    if (range.size() != 2) throw SchemaError("gen-toy 1d: --range needs two values");
    ds = gen_toy_1d(n, range[0], range[1], seed, noise_std);
  } else if (kind == "2d") {
    ds = gen_toy_2d_clusters(std::max<long>(1, n / 2), seed, heteroscedastic);
  } else {
    throw SchemaError("gen-toy: kind must be 1d or 2d");
  }
  std::ostringstream os;
  write_dataset_csv(os, ds);
  write_text_file(out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg = parse_experiment_config(read_json_file(config_path));
  const TrainedModel model = train_experiment(cfg);
  save_bundle(model, out_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(const std::string& bundle_dir, const std::string& data_path,
                const std::string& out_path) {
  const TrainedModel model = load_bundle(bundle_dir);
  const Matrix x = load_feature_matrix(data_path, model.target_name);
  const std::vector<PredictionRow> rows = predict_rows(model, x);
  std::ostringstream os;
  write_predictions_csv(os, rows);
  write_text_file(out_path, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// map2d

int cmd_map2d(const std::string& bundle_dir, std::vector<double> bounds, long resolution,
              const std::string& out_path) {
  if (bounds.size() != 2 && bounds.size() != 4)
    throw SchemaError("map2d: --bounds needs lo,hi or lo1,hi1,lo2,hi2");
  const double lo1 = bounds[0], hi1 = bounds[1];
  const double lo2 = bounds.size() == 4 ? bounds[2] : bounds[0];
  const double hi2 = bounds.size() == 4 ? bounds[3] : bounds[1];
  const TrainedModel model = load_bundle(bundle_dir);
  const Matrix grid = grid2d(lo1, hi1, lo2, hi2, resolution);
  const std::vector<PredictionRow> rows = predict_rows(model, grid);
  std::ostringstream os;
  const bool with_dist = !rows.empty() && rows.front().dist_train.has_value();
  os << "x1,x2,mean,var_total,var_aleatory,var_epistemic";
  if (with_dist) os << ",dist_train";
  os << '\n';
  os.precision(17);
  for (size_t i = 0; i < rows.size(); ++i) {
    const GaussianPrediction& p = rows[i].pred;
    os << grid(static_cast<Eigen::Index>(i), 0) << ',' << grid(static_cast<Eigen::Index>(i), 1)
       << ',' << p.mean << ',' << p.variance_total << ',' << p.variance_aleatory << ','
       << p.variance_epistemic;
    if (with_dist) os << ',' << *rows[i].dist_train;
    os << '\n';
  }
  write_text_file(out_path, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& preds_path, const std::string& targets_path,
                 const std::string& target_column, int levels, double step,
                 const std::string& out_path) {
  const std::vector<PredictionRow> rows = read_predictions_csv(preds_path);
  Predictions preds;
  preds.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].pred.variance_total > 0.0))
      throw DataError("evaluate: non-positive predictive variance at row " +
                      std::to_string(i + 2));
    preds.push_back(rows[i].pred);
  }
  const std::vector<double> targets = load_target_vector(targets_path, target_column);
  if (targets.size() != preds.size())
    throw DataError("evaluate: predictions and targets disagree in length");
  const EvaluationReport report =
      evaluate_predictions(preds, targets, default_levels(levels), step);
  json j = evaluation_report_to_json(report);
  j["n_samples"] = preds.size();
  write_json_file(out_path, j);

  const fs::path base = fs::path(out_path).parent_path();
  const std::string stem = fs::path(out_path).stem().string();
  {
    std::ostringstream os;
    write_calibration_csv(os, report.calibration);
    write_text_file(base / (stem + "_calibration.csv"), os.str());
  }
  {
    std::ostringstream os;
    write_sparsification_csv(os, report.sparsification);
    write_text_file(base / (stem + "_sparsification.csv"), os.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// recalibrate

int cmd_recalibrate(const std::string& preds_path, const std::string& targets_path,
                    const std::string& target_column, const std::string& out_path) {
  const std::vector<PredictionRow> rows = read_predictions_csv(preds_path);
  Predictions preds;
  for (const auto& row : rows) preds.push_back(row.pred);
  const std::vector<double> targets = load_target_vector(targets_path, target_column);
  if (targets.size() != preds.size())
    throw DataError("recalibrate: predictions and targets disagree in length");
  const RecalibrationResult r = isotonic_recalibrate(preds, targets);
  json j;
  j["knots_u"] = r.map.knots_u;
  j["knots_r"] = r.map.knots_r;
  j["ece_before"] = r.ece_before;
  j["ece_after"] = r.ece_after;
  write_json_file(out_path, j);
  return 0;
}

// ---------------------------------------------------------------------------
// refine: the candidate CSV doubles as the truth oracle (its target column
// holds the oracle value for each candidate), keeping the command a pure
// function of its input files.

int cmd_refine(const std::string& bundle_dir, const std::string& acquisition,
               const std::string& candidates_path, int budget, double threshold,
               const std::string& out_path, const std::string& out_model) {
  TrainedModel model = load_bundle(bundle_dir);
  if (!model.gpr) throw SchemaError("refine: the model bundle must hold a gpr model");
  Dataset pool = load_csv_file(candidates_path, model.target_name);

  Matrix candidates = pool.x;
  Vector oracle_values = pool.y;
  if (model.standardization) {
    candidates = standardize_features(pool.x, *model.standardization);
    oracle_values = (pool.y.array() - model.standardization->target_mean) /
                    model.standardization->target_std;
  }

  AcquisitionSpec acq;
  if (acquisition == "eff")
    acq.kind = AcquisitionKind::Eff;
  else if (acquisition == "u")
    acq.kind = AcquisitionKind::U;
  else if (acquisition == "ei")
    acq.kind = AcquisitionKind::Ei;
  else
    throw SchemaError("refine: acquisition must be eff, u or ei");
  double std_threshold = threshold;
  if (model.standardization)
    std_threshold = (threshold - model.standardization->target_mean) /
                    model.standardization->target_std;
  acq.threshold = std_threshold;

  // finite-pool lookup oracle: candidates are rows of the pool matrix
  TruthOracle oracle = [&](const Eigen::Ref<const Vector>& x) -> double {
    for (Eigen::Index i = 0; i < candidates.rows(); ++i)
      if (candidates.row(i).transpose() == x) return oracle_values(i);
    throw DataError("refine: queried point is not in the candidate pool");
  };

  Rng rng(model.seed ^ 0xa076bc9d21430d17ULL);
  const RefineResult result = refine(*model.gpr, oracle, acq, candidates, budget, rng);

  std::vector<RefineTraceRow> trace = result.trace;
  if (model.standardization) {
    for (auto& row : trace) {
      for (Eigen::Index d = 0; d < row.x.size(); ++d)
        row.x(d) = row.x(d) * model.standardization->feature_std(d) +
                   model.standardization->feature_mean(d);
      row.oracle_value = row.oracle_value * model.standardization->target_std +
                         model.standardization->target_mean;
    }
  }
  std::ostringstream os;
  write_refine_trace_csv(os, trace);
  write_text_file(out_path, os.str());

  if (!out_model.empty()) {
    model.gpr = result.model;
    save_bundle(model, out_model);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep: cross product over --vary values, one training + uncertainty map per
// entry, with the pairwise mean-uncertainty differences summarized.

struct SweepAxis {
  std::string key;
  std::vector<json> values;
};

SweepAxis parse_vary(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw SchemaError("sweep: --vary needs key=v1,v2,...");
  SweepAxis axis;
  axis.key = text.substr(0, eq);
  std::stringstream ss(text.substr(eq + 1));
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      axis.values.push_back(json::parse(cell));
    } catch (const json::exception&) {
      axis.values.push_back(json(cell));  // plain string value
    }
  }
  if (axis.values.empty()) throw SchemaError("sweep: --vary '" + axis.key + "' has no values");
  return axis;
}

void apply_vary(json& config, const std::string& method, const std::string& key,
                const json& value) {
  // dotted keys address the config root; bare keys address the method block
  json* node = &config;
  std::string remaining = key;
  if (key.find('.') == std::string::npos) {
    node = &config[method];
    (*node)[key] = value;
    return;
  }
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& vary,
              std::vector<double> bounds, long resolution, const std::string& out_dir) {
  const json base = read_json_file(config_path);
  parse_experiment_config(base);  // validate before any work
  std::vector<SweepAxis> axes;
  for (const auto& v : vary) axes.push_back(parse_vary(v));
  if (axes.empty()) throw SchemaError("sweep: at least one --vary axis required");
  const std::string method = base.at("method").get<std::string>();

  // cross product
  std::vector<json> entries{base};
  for (const SweepAxis& axis : axes) {
    std::vector<json> expanded;
    for (const json& entry : entries) {
      for (const json& value : axis.values) {
        json next = entry;
        apply_vary(next, method, axis.key, value);
        expanded.push_back(std::move(next));
      }
    }
    entries = std::move(expanded);
  }

  fs::create_directories(out_dir);
  const double lo1 = bounds[0], hi1 = bounds[1];
  const double lo2 = bounds.size() == 4 ? bounds[2] : bounds[0];
  const double hi2 = bounds.size() == 4 ? bounds[3] : bounds[1];
  const Matrix grid = grid2d(lo1, hi1, lo2, hi2, resolution);

  auto run_entry = [&](size_t index) -> double {
    const ExperimentConfig cfg = parse_experiment_config(entries[index]);
    const TrainedModel model = train_experiment(cfg);
    const fs::path entry_dir = fs::path(out_dir) / indexed_name("entry_", index, "");
    save_bundle(model, entry_dir / "model");
    const std::vector<PredictionRow> rows = predict_rows(model, grid);
    std::ostringstream os;
    os << "x1,x2,mean,var_total,var_aleatory,var_epistemic\n";
    os.precision(17);
    double mean_std = 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
      const GaussianPrediction& p = rows[i].pred;
      os << grid(static_cast<Eigen::Index>(i), 0) << ',' << grid(static_cast<Eigen::Index>(i), 1)
         << ',' << p.mean << ',' << p.variance_total << ',' << p.variance_aleatory << ','
         << p.variance_epistemic << '\n';
      mean_std += p.std_total() / double(rows.size());
    }
    write_text_file(entry_dir / "map.csv", os.str());
    write_json_file(entry_dir / "config.json", entries[index]);
    return mean_std;
  };

  // entries are independent; run them on a small thread pool
  std::vector<double> mean_stds(entries.size(), 0.0);
  const size_t workers = std::max<size_t>(1, std::thread::hardware_concurrency());
  for (size_t start = 0; start < entries.size(); start += workers) {
    std::vector<std::future<double>> futures;
    for (size_t i = start; i < std::min(entries.size(), start + workers); ++i)
      futures.push_back(std::async(std::launch::async, run_entry, i));
    for (size_t i = start; i < std::min(entries.size(), start + workers); ++i)
      mean_stds[i] = futures[i - start].get();
  }

  json summary;
  summary["entries"] = json::array();
  for (size_t i = 0; i < entries.size(); ++i) {
    json e;
    e["name"] = indexed_name("entry_", i, "");
    e["overrides"] = json::object();
    for (const SweepAxis& axis : axes) {
      if (axis.key.find('.') == std::string::npos)
        e["overrides"][axis.key] = entries[i].at(method).at(axis.key);
    }
    e["mean_predictive_std"] = mean_stds[i];
    summary["entries"].push_back(e);
  }
  // instability table: pairwise absolute differences of the map-average std
  json diffs = json::array();
  for (size_t i = 0; i < entries.size(); ++i) {
    json row = json::array();
    for (size_t j = 0; j < entries.size(); ++j)
      row.push_back(std::abs(mean_stds[i] - mean_stds[j]));
    diffs.push_back(row);
  }
  summary["pairwise_mean_std_difference"] = diffs;
  write_json_file(fs::path(out_dir) / "sweep_summary.json", summary);
  return 0;
}

// ---------------------------------------------------------------------------

int error_exit(int code, const char* type, const std::string& message) {
  json j;
  j["error"] = {{"code", code}, {"type", type}, {"message", message}};
  std::cout << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty quantification toolkit for regression"};
  app.require_subcommand(1);

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "generate a toy dataset as CSV");
  std::string gen_kind;
  long gen_n = 8;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  double gen_noise = 0.1;
  std::vector<double> gen_range = {-4.0, 4.0};
  bool gen_hetero = false;
  gen->add_option("kind", gen_kind, "1d or 2d")->required();
  gen->add_option("--n", gen_n, "number of samples (2d: total across both clusters)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--noise-std", gen_noise, "observation noise std (1d)");
  gen->add_option("--range", gen_range, "x range lo hi (1d)")->expected(2);
  gen->add_flag("--heteroscedastic", gen_hetero, "sine-modulated noise (2d)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
  std::string train_config, train_out;
  train_cmd->add_option("--config", train_config, "experiment config JSON")->required();
  train_cmd->add_option("--out", train_out, "output model bundle directory")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "predict with a trained bundle");
  std::string pred_model, pred_data, pred_out;
  predict_cmd->add_option("--model", pred_model, "model bundle directory")->required();
  predict_cmd->add_option("--data", pred_data, "input CSV (target column ignored if present)")
      ->required();
  predict_cmd->add_option("--out", pred_out, "output predictions CSV")->required();

  // map2d
  auto* map_cmd = app.add_subcommand("map2d", "uncertainty map over a 2D grid");
  std::string map_model, map_out;
  std::vector<double> map_bounds = {-15.0, 15.0};
  long map_res = 200;
  map_cmd->add_option("--model", map_model, "model bundle directory")->required();
  map_cmd->add_option("--bounds", map_bounds, "lo hi (both axes) or lo1 hi1 lo2 hi2")
      ->expected(2, 4);
  map_cmd->add_option("--resolution", map_res, "grid resolution per axis");
  map_cmd->add_option("--out", map_out, "output grid CSV")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "uncertainty quality metrics");
  std::string eval_preds, eval_targets, eval_out, eval_target_col = "y";
  int eval_levels = 11;
  double eval_step = 0.02;
  eval_cmd->add_option("--preds", eval_preds, "predictions CSV")->required();
  eval_cmd->add_option("--targets", eval_targets, "targets CSV")->required();
  eval_cmd->add_option("--target", eval_target_col, "target column name");
  eval_cmd->add_option("--levels", eval_levels, "number of confidence levels");
  eval_cmd->add_option("--sparsification-step", eval_step, "removal fraction per iteration");
  eval_cmd->add_option("--out", eval_out, "output report JSON")->required();

  // recalibrate
  auto* recal_cmd = app.add_subcommand("recalibrate", "fit an isotonic recalibration map");
  std::string recal_preds, recal_targets, recal_out, recal_target_col = "y";
  recal_cmd->add_option("--preds", recal_preds, "validation predictions CSV")->required();
  recal_cmd->add_option("--targets", recal_targets, "validation targets CSV")->required();
  recal_cmd->add_option("--target", recal_target_col, "target column name");
  recal_cmd->add_option("--out", recal_out, "output map JSON")->required();

  // refine
  auto* refine_cmd = app.add_subcommand("refine", "acquisition-driven surrogate refinement");
  std::string ref_model, ref_acq, ref_candidates, ref_out, ref_out_model;
  int ref_budget = 10;
  double ref_threshold = 0.0;
  refine_cmd->add_option("--model", ref_model, "gpr model bundle")->required();
  refine_cmd->add_option("--acquisition", ref_acq, "eff, u or ei")->required();
  refine_cmd
      ->add_option("--candidates", ref_candidates,
                   "candidate CSV; its target column is the oracle")
      ->required();
  refine_cmd->add_option("--budget", ref_budget, "number of oracle queries");
  refine_cmd->add_option("--threshold", ref_threshold, "limit-state threshold for eff/u");
  refine_cmd->add_option("--out", ref_out, "output trace CSV")->required();
  refine_cmd->add_option("--out-model", ref_out_model, "optional refined bundle directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "configuration grid study");
  std::string sweep_config, sweep_out;
  std::vector<std::string> sweep_vary;
  std::vector<double> sweep_bounds = {-15.0, 15.0};
  long sweep_res = 40;
  sweep_cmd->add_option("--config", sweep_config, "base experiment config")->required();
  sweep_cmd->add_option("--vary", sweep_vary, "key=v1,v2,... (repeatable)")->required();
  sweep_cmd->add_option("--bounds", sweep_bounds, "map bounds")->expected(2, 4);
  sweep_cmd->add_option("--resolution", sweep_res, "map resolution per axis");
  sweep_cmd->add_option("--out", sweep_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::stringstream message;
    message << e.what();
    return error_exit(2, "cli", message.str());
  }

  try {
    if (gen->parsed())
      return cmd_gen_toy(gen_kind, gen_n, gen_seed, gen_out, gen_noise, gen_range, gen_hetero);
    if (train_cmd->parsed()) return cmd_train(train_config, train_out);
    if (predict_cmd->parsed()) return cmd_predict(pred_model, pred_data, pred_out);
    if (map_cmd->parsed()) return cmd_map2d(map_model, map_bounds, map_res, map_out);
    if (eval_cmd->parsed())
      return cmd_evaluate(eval_preds, eval_targets, eval_target_col, eval_levels, eval_step,
                          eval_out);
    if (recal_cmd->parsed())
      return cmd_recalibrate(recal_preds, recal_targets, recal_target_col, recal_out);
    if (refine_cmd->parsed())
      return cmd_refine(ref_model, ref_acq, ref_candidates, ref_budget, ref_threshold, ref_out,
                        ref_out_model);
    if (sweep_cmd->parsed())
      return cmd_sweep(sweep_config, sweep_vary, sweep_bounds, sweep_res, sweep_out);
  } catch (const SchemaError& e) {
    return error_exit(2, "schema", e.what());
  } catch (const DivergenceError& e) {
    return error_exit(4, "divergence", e.what());
  } catch (const DecompositionError& e) {
    return error_exit(4, "numeric", e.what());
  } catch (const SingularSystemError& e) {
    return error_exit(4, "numeric", e.what());
  } catch (const DataError& e) {
    return error_exit(3, "data", e.what());
  } catch (const std::invalid_argument& e) {
    return error_exit(2, "schema", e.what());
  } catch (const std::exception& e) {
    return error_exit(3, "error", e.what());
  }
  return 0;
}
