#pragma once

// Toy-problem generators, CSV ingestion, standardization, and 2D evaluation
// grids.
//
// CSV dialect: comma-separated, UTF-8, header row required, '.' decimal
// separator.

#include "uqkit/numerics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqkit {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct Dataset {
  Matrix x;  // N x D
  Vector y;  // N
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
};

// ---------------------------------------------------------------------------
// Toy problems

// 1D sine data: y = sin(0.9 x) + eps, eps ~ N(0, noise_std^2), x uniform.
inline Dataset gen_toy_1d(Eigen::Index n, double x_lo, double x_hi, std::uint64_t seed,
                          double noise_std = 0.1) {
  if (n < 1) throw std::invalid_argument("gen_toy_1d: n must be >= 1");
  if (!(x_hi > x_lo)) throw std::invalid_argument("gen_toy_1d: empty range");
  Rng rng(seed);
  Dataset ds;
  ds.x.resize(n, 1);
  ds.y.resize(n);
  ds.feature_names = {"x"};
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.x(i, 0) = rng.uniform(x_lo, x_hi);
    ds.y(i) = std::sin(0.9 * ds.x(i, 0)) + noise_std * rng.normal();
  }
  return ds;
}

// Underlying 2D response surface of the toy comparison problem.
inline double toy_2d_true(double x1, double x2) {
  return ((1.5 + x1) * (1.5 + x1) + 4.0) * (1.5 + x2) / 20.0 -
         std::sin(5.0 * (1.5 + x1) / 2.0);
}

namespace detail {

inline Matrix toy_cluster_chol() {
  Matrix cov(2, 2);
  cov << 0.4, -0.32, -0.32, 0.4;
  return cholesky(cov);
}

}  // namespace detail

// Training clusters: n_per_cluster draws from each of the two bivariate
// Gaussians centered at (8, 3.5) and (-2.5, -2.5) with covariance
// [[0.4, -0.32], [-0.32, 0.4]]. The heteroscedastic flag adds observation
// noise eps(x) ~ N(0, 0.5 |sin y(x)|^2).
inline Dataset gen_toy_2d_clusters(Eigen::Index n_per_cluster, std::uint64_t seed,
                                   bool heteroscedastic = false) {
  if (n_per_cluster < 1) throw std::invalid_argument("gen_toy_2d_clusters: n must be >= 1");
  Rng rng(seed);
  const Matrix l = detail::toy_cluster_chol();
  Matrix means(2, 2);
  means << 8.0, 3.5, -2.5, -2.5;
  Dataset ds;
  ds.x.resize(2 * n_per_cluster, 2);
  ds.y.resize(2 * n_per_cluster);
  ds.feature_names = {"x1", "x2"};
  for (int c = 0; c < 2; ++c) {
    for (Eigen::Index i = 0; i < n_per_cluster; ++i) {
      const Eigen::Index row = c * n_per_cluster + i;
      const Vector p = means.row(c).transpose() + l * rng.normal_vector(2);
      ds.x.row(row) = p.transpose();
      double y = toy_2d_true(p(0), p(1));
      if (heteroscedastic) {
        const double noise_std = std::sqrt(0.5) * std::abs(std::sin(y));
        y += noise_std * rng.normal();
      }
      ds.y(row) = y;
    }
  }
  return ds;
}

// Out-of-distribution test cluster: same covariance, centered at (-11, -11)
// in the lower-left region.
inline Matrix gen_toy_2d_ood(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_toy_2d_ood: n must be >= 1");
  Rng rng(seed);
  const Matrix l = detail::toy_cluster_chol();
  Vector mean(2);
  mean << -11.0, -11.0;
  Matrix x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = (mean + l * rng.normal_vector(2)).transpose();
  return x;
}

// resolution^2 grid points covering [lo1, hi1] x [lo2, hi2], emitted row
// major: the first axis varies slowest, the second fastest.
inline Matrix grid2d(double lo1, double hi1, double lo2, double hi2, Eigen::Index resolution) {
  if (resolution < 2) throw std::invalid_argument("grid2d: resolution must be >= 2");
  if (!(hi1 > lo1) || !(hi2 > lo2)) throw std::invalid_argument("grid2d: inverted bounds");
  Matrix grid(resolution * resolution, 2);
  for (Eigen::Index i = 0; i < resolution; ++i) {
    const double x1 = lo1 + (hi1 - lo1) * double(i) / double(resolution - 1);
    for (Eigen::Index j = 0; j < resolution; ++j) {
      const double x2 = lo2 + (hi2 - lo2) * double(j) / double(resolution - 1);
      grid(i * resolution + j, 0) = x1;
      grid(i * resolution + j, 1) = x2;
    }
  }
  return grid;
}

// The default uncertainty-map grid: 200 x 200 = 40,000 points on [-15, 15]^2.
inline Matrix grid2d_default() { return grid2d(-15.0, 15.0, -15.0, 15.0, 200); }

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

inline Dataset load_csv(std::istream& in, const std::string& target_column) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file");
  const std::vector<std::string> header = detail::split_csv_line(line);
  Eigen::Index target_idx = -1;
  std::vector<std::string> feature_names;
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string name = detail::trim(header[c]);
    if (name == target_column)
      target_idx = static_cast<Eigen::Index>(c);
    else
      feature_names.push_back(name);
  }
  if (target_idx < 0) throw DataError("load_csv: missing target column '" + target_column + "'");

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("load_csv: row " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    std::vector<double> parsed(cells.size());
    for (size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = detail::trim(cells[c]);
      try {
        size_t used = 0;
        parsed[c] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError("load_csv: non-numeric cell at row " + std::to_string(line_no) +
                        ", column '" + detail::trim(header[c]) + "'");
      }
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw DataError("load_csv: no data rows");

  Dataset ds;
  ds.feature_names = feature_names;
  ds.target_name = target_column;
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size()) - 1);
  ds.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    Eigen::Index f = 0;
    for (size_t c = 0; c < rows[r].size(); ++c) {
      if (static_cast<Eigen::Index>(c) == target_idx)
        ds.y(static_cast<Eigen::Index>(r)) = rows[r][c];
      else
        ds.x(static_cast<Eigen::Index>(r), f++) = rows[r][c];
    }
  }
  return ds;
}

inline Dataset load_csv_file(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");
  return load_csv(in, target_column);
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
    os << (c < static_cast<Eigen::Index>(ds.feature_names.size())
               ? ds.feature_names[static_cast<size_t>(c)]
               : "x" + std::to_string(c))
       << ',';
  }
  os << ds.target_name << '\n';
  os.precision(17);
  for (Eigen::Index r = 0; r < ds.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.x.cols(); ++c) os << ds.x(r, c) << ',';
    os << ds.y(r) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Standardization: per-feature mean 0 / std 1 (sample std, N-1) plus the
// target. Zero-variance features are flagged and passed through unscaled. The
// record is computed on the training split only and applied unchanged to
// other splits.

struct StandardizationRecord {
  Vector feature_mean;
  Vector feature_std;             // 1.0 where flagged constant
  std::vector<bool> feature_constant;
  double target_mean = 0.0;
  double target_std = 1.0;
  bool target_constant = false;
};

inline StandardizationRecord standardization_fit(const Dataset& ds) {
  if (ds.size() < 1) throw std::invalid_argument("standardize: empty dataset");
  StandardizationRecord rec;
  const double n = static_cast<double>(ds.size());
  rec.feature_mean = ds.x.colwise().mean();
  rec.feature_std.resize(ds.dim());
  rec.feature_constant.resize(static_cast<size_t>(ds.dim()));
  for (Eigen::Index c = 0; c < ds.dim(); ++c) {
    const double var =
        n > 1 ? (ds.x.col(c).array() - rec.feature_mean(c)).square().sum() / (n - 1.0) : 0.0;
    const double sd = std::sqrt(var);
    rec.feature_constant[static_cast<size_t>(c)] = !(sd > 0.0);
    rec.feature_std(c) = sd > 0.0 ? sd : 1.0;
  }
  rec.target_mean = ds.y.mean();
  const double tvar = n > 1 ? (ds.y.array() - rec.target_mean).square().sum() / (n - 1.0) : 0.0;
  const double tsd = std::sqrt(tvar);
  rec.target_constant = !(tsd > 0.0);
  rec.target_std = tsd > 0.0 ? tsd : 1.0;
  return rec;
}

inline Dataset standardization_apply(const Dataset& ds, const StandardizationRecord& rec) {
  if (ds.dim() != rec.feature_mean.size())
    throw DimensionError("standardize: record dimension mismatch");
  Dataset out = ds;
  for (Eigen::Index c = 0; c < ds.dim(); ++c)
    out.x.col(c) = (ds.x.col(c).array() - rec.feature_mean(c)) / rec.feature_std(c);
  out.y = (ds.y.array() - rec.target_mean) / rec.target_std;
  return out;
}

inline Dataset standardization_invert(const Dataset& ds, const StandardizationRecord& rec) {
  if (ds.dim() != rec.feature_mean.size())
    throw DimensionError("standardize: record dimension mismatch");
  Dataset out = ds;
  for (Eigen::Index c = 0; c < ds.dim(); ++c)
    out.x.col(c) = ds.x.col(c).array() * rec.feature_std(c) + rec.feature_mean(c);
  out.y = ds.y.array() * rec.target_std + rec.target_mean;
  return out;
}

inline Matrix standardize_features(const Matrix& x, const StandardizationRecord& rec) {
  if (x.cols() != rec.feature_mean.size())
    throw DimensionError("standardize: record dimension mismatch");
  Matrix out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    out.col(c) = (x.col(c).array() - rec.feature_mean(c)) / rec.feature_std(c);
  return out;
}

inline nlohmann::json standardization_to_json(const StandardizationRecord& rec) {
  nlohmann::json j;
  j["feature_mean"] = std::vector<double>(rec.feature_mean.data(),
                                          rec.feature_mean.data() + rec.feature_mean.size());
  j["feature_std"] = std::vector<double>(rec.feature_std.data(),
                                         rec.feature_std.data() + rec.feature_std.size());
  j["feature_constant"] = rec.feature_constant;
  j["target_mean"] = rec.target_mean;
  j["target_std"] = rec.target_std;
  j["target_constant"] = rec.target_constant;
  return j;
}

inline StandardizationRecord standardization_from_json(const nlohmann::json& j) {
  StandardizationRecord rec;
  const auto fm = j.at("feature_mean").get<std::vector<double>>();
  const auto fs = j.at("feature_std").get<std::vector<double>>();
  rec.feature_mean = Eigen::Map<const Vector>(fm.data(), static_cast<Eigen::Index>(fm.size()));
  rec.feature_std = Eigen::Map<const Vector>(fs.data(), static_cast<Eigen::Index>(fs.size()));
  rec.feature_constant = j.at("feature_constant").get<std::vector<bool>>();
  rec.target_mean = j.at("target_mean").get<double>();
  rec.target_std = j.at("target_std").get<double>();
  rec.target_constant = j.at("target_constant").get<bool>();
  return rec;
}

}  // namespace uqkit
