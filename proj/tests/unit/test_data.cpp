#include "uqkit/data.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace uqkit;

TEST_CASE("noiseless toy 1d data lies on the sine curve") {
  const Dataset ds = gen_toy_1d(50, -4.0, 4.0, 3, 0.0);
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    REQUIRE(ds.y(i) == std::sin(0.9 * ds.x(i, 0)));
  CHECK(std::sin(0.9 * 0.0) == 0.0);
}

TEST_CASE("toy 1d generation is reproducible and respects the range") {
  const Dataset a = gen_toy_1d(32, -5.0, 5.0, 11);
  const Dataset b = gen_toy_1d(32, -5.0, 5.0, 11);
  REQUIRE(a.x == b.x);
  REQUIRE(a.y == b.y);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    REQUIRE(a.x(i, 0) >= -5.0);
    REQUIRE(a.x(i, 0) < 5.0);
  }
  REQUIRE_THROWS_AS(gen_toy_1d(10, 1.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("toy 1d noise level matches the specification") {
  const Dataset ds = gen_toy_1d(10000, -4.0, 4.0, 17);
  double sumsq = 0.0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const double r = ds.y(i) - std::sin(0.9 * ds.x(i, 0));
    sumsq += r * r;
  }
  const double residual_std = std::sqrt(sumsq / double(ds.size() - 1));
  CHECK(std::abs(residual_std - 0.1) < 0.01);
}

TEST_CASE("toy 2d closed-form values") {
  CHECK(toy_2d_true(-1.5, -1.5) == Catch::Approx(0.0).margin(1e-15));
  CHECK(toy_2d_true(0.5, 0.5) == Catch::Approx(0.8 - std::sin(5.0)).epsilon(1e-12));
  CHECK(0.8 - std::sin(5.0) == Catch::Approx(1.7589242746631385).epsilon(1e-12));
}

TEST_CASE("toy 2d cluster means match their construction") {
  const Dataset ds = gen_toy_2d_clusters(10000, 5);
  const Vector mean_a = ds.x.topRows(10000).colwise().mean();
  const Vector mean_b = ds.x.bottomRows(10000).colwise().mean();
  CHECK(std::abs(mean_a(0) - 8.0) < 0.05);
  CHECK(std::abs(mean_a(1) - 3.5) < 0.05);
  CHECK(std::abs(mean_b(0) + 2.5) < 0.05);
  CHECK(std::abs(mean_b(1) + 2.5) < 0.05);
}

TEST_CASE("toy 2d without the heteroscedastic flag is exactly the true surface") {
  const Dataset ds = gen_toy_2d_clusters(100, 9, false);
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    REQUIRE(ds.y(i) == toy_2d_true(ds.x(i, 0), ds.x(i, 1)));
}

TEST_CASE("heteroscedastic noise follows the sine-modulated scale") {
  const Dataset ds = gen_toy_2d_clusters(20000, 13, true);
  double acc = 0.0;
  long count = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const double truth = toy_2d_true(ds.x(i, 0), ds.x(i, 1));
    const double expected_var = 0.5 * std::sin(truth) * std::sin(truth);
    if (expected_var < 0.05) continue;  // skip near-silent regions
    const double r = ds.y(i) - truth;
    acc += r * r / expected_var;
    ++count;
  }
  REQUIRE(count > 1000);
  CHECK(std::abs(acc / double(count) - 1.0) < 0.1);
}

TEST_CASE("ood cluster is reproducible and sits at the documented center") {
  const Matrix a = gen_toy_2d_ood(5000, 3);
  const Matrix b = gen_toy_2d_ood(5000, 3);
  REQUIRE(a == b);
  const Vector mean = a.colwise().mean();
  CHECK(std::abs(mean(0) + 11.0) < 0.1);
  CHECK(std::abs(mean(1) + 11.0) < 0.1);
}

TEST_CASE("grid2d with resolution two is the four corners") {
  const Matrix g = grid2d(0.0, 1.0, 0.0, 1.0, 2);
  REQUIRE(g.rows() == 4);
  CHECK(g.row(0) == Eigen::RowVector2d(0.0, 0.0));
  CHECK(g.row(1) == Eigen::RowVector2d(0.0, 1.0));
  CHECK(g.row(2) == Eigen::RowVector2d(1.0, 0.0));
  CHECK(g.row(3) == Eigen::RowVector2d(1.0, 1.0));
}

TEST_CASE("default 2d grid has 40000 points over [-15, 15]^2") {
  const Matrix g = grid2d_default();
  REQUIRE(g.rows() == 40000);
  CHECK(g.col(0).minCoeff() == -15.0);
  CHECK(g.col(0).maxCoeff() == 15.0);
  CHECK(g.col(1).minCoeff() == -15.0);
  CHECK(g.col(1).maxCoeff() == 15.0);
  // row-major ordering: the second axis varies fastest
  CHECK(g(0, 0) == g(1, 0));
  CHECK(g(1, 1) > g(0, 1));
}

TEST_CASE("grid2d rejects inverted bounds and tiny resolutions") {
  REQUIRE_THROWS_AS(grid2d(1.0, 0.0, 0.0, 1.0, 10), std::invalid_argument);
  REQUIRE_THROWS_AS(grid2d(0.0, 1.0, 0.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("csv loading parses a hand-written fixture exactly") {
  std::istringstream csv("a,b,y\n1.0,2.0,3.0\n-0.5,0.25,1e-3\n4,5,6\n");
  const Dataset ds = load_csv(csv, "y");
  REQUIRE(ds.size() == 3);
  REQUIRE(ds.dim() == 2);
  CHECK(ds.x(0, 0) == 1.0);
  CHECK(ds.x(1, 1) == 0.25);
  CHECK(ds.y(1) == 1e-3);
  CHECK(ds.y(2) == 6.0);
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("csv loading reports the offending cell") {
  std::istringstream csv("a,y\n1.0,2.0\nbad,3.0\n");
  try {
    load_csv(csv, "y");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("'a'") != std::string::npos);
  }
}

TEST_CASE("csv loading requires the target column") {
  std::istringstream csv("a,b\n1,2\n");
  REQUIRE_THROWS_AS(load_csv(csv, "y"), DataError);
}

TEST_CASE("csv loading rejects ragged rows") {
  std::istringstream csv("a,y\n1.0,2.0,3.0\n");
  REQUIRE_THROWS_AS(load_csv(csv, "y"), DataError);
}

TEST_CASE("standardization round trip is the identity") {
  Rng rng(21);
  Dataset ds;
  ds.x.resize(40, 3);
  ds.y.resize(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    ds.x.row(i) = (rng.normal_vector(3) * 2.0).transpose();
    ds.y(i) = 5.0 + rng.normal();
  }
  const StandardizationRecord rec = standardization_fit(ds);
  const Dataset applied = standardization_apply(ds, rec);
  // standardized moments
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(std::abs(applied.x.col(c).mean()) < 1e-12);
    const double sd = std::sqrt((applied.x.col(c).array() - applied.x.col(c).mean())
                                    .square()
                                    .sum() /
                                39.0);
    CHECK(sd == Catch::Approx(1.0).epsilon(1e-10));
  }
  const Dataset back = standardization_invert(applied, rec);
  CHECK((back.x - ds.x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.y - ds.y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant features are flagged and passed through unscaled") {
  Dataset ds;
  ds.x.resize(5, 2);
  ds.x.col(0).setConstant(3.0);
  ds.x.col(1) << 1, 2, 3, 4, 5;
  ds.y.resize(5);
  ds.y << 1, 2, 3, 4, 5;
  const StandardizationRecord rec = standardization_fit(ds);
  REQUIRE(rec.feature_constant[0]);
  REQUIRE_FALSE(rec.feature_constant[1]);
  const Dataset applied = standardization_apply(ds, rec);
  // unscaled means centered only (std divisor forced to one)
  for (Eigen::Index i = 0; i < 5; ++i) REQUIRE(applied.x(i, 0) == 0.0);
}

TEST_CASE("standardization record JSON round trip") {
  Rng rng(22);
  Dataset ds;
  ds.x.resize(10, 2);
  ds.y.resize(10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    ds.x.row(i) = rng.normal_vector(2).transpose();
    ds.y(i) = rng.normal();
  }
  const StandardizationRecord rec = standardization_fit(ds);
  const StandardizationRecord back = standardization_from_json(standardization_to_json(rec));
  CHECK(back.feature_mean == rec.feature_mean);
  CHECK(back.feature_std == rec.feature_std);
  CHECK(back.target_mean == rec.target_mean);
  CHECK(back.target_std == rec.target_std);
}

TEST_CASE("dataset CSV writer round trips through the loader") {
  Dataset ds;
  ds.x.resize(3, 2);
  ds.x << 1, 2, 3, 4, 5, 6;
  ds.y.resize(3);
  ds.y << 0.5, -0.25, 7;
  ds.feature_names = {"f0", "f1"};
  std::ostringstream os;
  write_dataset_csv(os, ds);
  std::istringstream is(os.str());
  const Dataset back = load_csv(is, "y");
  REQUIRE(back.x == ds.x);
  REQUIRE(back.y == ds.y);
}
