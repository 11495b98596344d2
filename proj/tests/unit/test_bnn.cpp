#include "uqkit/bnn.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace uqkit;

namespace {

// f(x; theta) = theta[0] (constant model), for conjugate-mean inference
LogPosterior constant_model_posterior(const Vector& y, double prior_std, double noise_std) {
  Matrix x = Matrix::Zero(y.size(), 1);
  LogPosterior::ModelFn fn = [](const Eigen::Ref<const Vector>&, const Vector& theta,
                                Vector* grad) {
    if (grad != nullptr) (*grad)(0) += 1.0;
    return theta(0);
  };
  return LogPosterior(std::move(fn), 1, x, y, prior_std, noise_std);
}

// a crafted 2D correlated Gaussian log density
LogDensityFn correlated_gaussian(double rho) {
  Matrix cov(2, 2);
  cov << 1.0, rho, rho, 1.0;
  const Matrix prec = cov.inverse();
  return [prec](const Vector& theta, Vector* grad) {
    if (grad != nullptr) *grad = -prec * theta;
    return -0.5 * theta.dot(prec * theta);
  };
}

}  // namespace

TEST_CASE("log posterior of the zero-parameter model matches the likelihood closed form") {
  Rng rng(1);
  const Eigen::Index n = 12;
  Vector y = rng.normal_vector(n);
  Matrix x = Matrix::Zero(n, 1);
  const double noise_std = 0.7;
  LogPosterior::ModelFn zero_model = [](const Eigen::Ref<const Vector>&, const Vector&,
                                        Vector*) { return 0.0; };
  LogPosterior lp(zero_model, 0, x, y, 1.0, noise_std);
  const double expected = -double(n) * std::log(std::sqrt(2.0 * M_PI) * noise_std) -
                          y.squaredNorm() / (2.0 * noise_std * noise_std);
  CHECK(lp.value(Vector(0)) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log posterior with no data reduces to the log prior") {
  Matrix x(0, 1);
  Vector y(0);
  LogPosterior::ModelFn fn = [](const Eigen::Ref<const Vector>&, const Vector& theta,
                                Vector* grad) {
    if (grad != nullptr) (*grad)(0) += 1.0;
    return theta(0);
  };
  LogPosterior lp(fn, 1, x, y, 2.0, 1.0);
  Vector theta = Vector::Zero(1);
  const double expected = -std::log(std::sqrt(2.0 * M_PI) * 2.0);
  CHECK(lp.value(theta) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("network-backed log posterior gradient matches finite differences") {
  Rng rng(2);
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.layers = {Layer::dense(4, Activation::Tanh), Layer::scalar_output()};
  Matrix x(6, 2);
  Vector y(6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    x.row(i) = rng.normal_vector(2).transpose();
    y(i) = rng.normal();
  }
  LogPosterior lp = LogPosterior::for_network(spec, x, y, 1.0, 0.3);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector theta = rng.normal_vector(lp.dim());
    Vector grad;
    lp.value_and_grad(theta, grad);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < lp.dim(); ++k) {
      Vector tp = theta, tm = theta;
      tp(k) += h;
      tm(k) -= h;
      const double fd = (lp.value(tp) - lp.value(tm)) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad(k)), 1e-3});
      REQUIRE(std::abs(fd - grad(k)) / denom < 1e-4);
    }
  }
}

TEST_CASE("MH recovers a standard normal target") {
  LogDensityFn target = [](const Vector& theta, Vector* grad) {
    if (grad != nullptr) *grad = -theta;
    return -0.5 * theta.squaredNorm();
  };
  Rng rng(3);
  const MhResult result = mh_sample(target, Vector::Zero(1), 100000, 1.0, rng);
  const double mean = result.chain.col(0).mean();
  const double var =
      (result.chain.col(0).array() - mean).square().sum() / double(result.chain.rows() - 1);
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
  CHECK(result.acceptance_rate > 0.1);
  CHECK(result.acceptance_rate < 0.9);
}

TEST_CASE("MH with zero proposal std stays at the start with full acceptance") {
  LogDensityFn target = [](const Vector& theta, Vector*) { return -0.5 * theta.squaredNorm(); };
  Rng rng(4);
  Vector theta0(1);
  theta0 << 1.7;
  const MhResult result = mh_sample(target, theta0, 500, 0.0, rng);
  CHECK(result.acceptance_rate == 1.0);
  for (Eigen::Index s = 0; s < result.chain.rows(); ++s)
    REQUIRE(result.chain(s, 0) == 1.7);
}

TEST_CASE("MH chains are reproducible from the seed") {
  LogDensityFn target = [](const Vector& theta, Vector*) { return -0.5 * theta.squaredNorm(); };
  Rng r1(5), r2(5);
  const MhResult a = mh_sample(target, Vector::Zero(2), 2000, 0.7, r1);
  const MhResult b = mh_sample(target, Vector::Zero(2), 2000, 0.7, r2);
  REQUIRE(a.chain == b.chain);
}

TEST_CASE("MH captures the correlation of a 2D Gaussian") {
  const double rho = 0.8;
  Rng rng(6);
  const MhResult result = mh_sample(correlated_gaussian(rho), Vector::Zero(2), 100000, 0.8, rng);
  const Eigen::Index burn = 10000;
  const Eigen::Index n = result.chain.rows() - burn;
  const Matrix tail = result.chain.bottomRows(n);
  const Vector mean = tail.colwise().mean();
  const Matrix centered = tail.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / double(n - 1);
  const double corr = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
  CHECK(std::abs(corr - rho) < 0.05);
}

TEST_CASE("MFVI recovers the conjugate Gaussian-mean posterior") {
  Rng data_rng(7);
  const double true_mean = 1.3;
  const Eigen::Index n = 50;
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = true_mean + data_rng.normal();
  LogPosterior lp = constant_model_posterior(y, 1.0, 1.0);
  // analytic posterior: N(sum(y) / (n + 1), 1 / (n + 1))
  const double post_mean = y.sum() / double(n + 1);
  const double post_std = std::sqrt(1.0 / double(n + 1));
  Rng rng(8);
  const MfviResult result = mfvi_fit(lp, MfviPosterior::init(1), 8, 3000, 0.01, rng);
  CHECK(std::abs(result.posterior.mu(0) - post_mean) < 0.05);
  CHECK(std::abs(result.posterior.sigma()(0) - post_std) < 0.2 * post_std);
}

TEST_CASE("MFVI with no data converges to the prior") {
  Matrix x(0, 1);
  Vector y(0);
  LogPosterior::ModelFn fn = [](const Eigen::Ref<const Vector>&, const Vector& theta,
                                Vector* grad) {
    if (grad != nullptr) (*grad)(0) += 1.0;
    return theta(0);
  };
  LogPosterior lp(fn, 1, x, y, 1.0, 1.0);
  Rng rng(9);
  MfviPosterior init = MfviPosterior::init(1, 0.5, 0.3);
  const MfviResult result = mfvi_fit(lp, init, 4, 4000, 0.01, rng);
  const Vector prior_mu = Vector::Zero(1);
  const Vector prior_sigma = Vector::Ones(1);
  const double kl = kl_diag_gaussians(result.posterior.mu, result.posterior.sigma(), prior_mu,
                                      prior_sigma);
  CHECK(kl < 0.01);
}

TEST_CASE("KL of identical diagonal Gaussians is zero") {
  Rng rng(10);
  const Vector mu = rng.normal_vector(4);
  const Vector sigma = rng.normal_vector(4).array().abs() + 0.1;
  CHECK(kl_diag_gaussians(mu, sigma, mu, sigma) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("MFVI ELBO trend is nondecreasing under a smoothing window") {
  Rng data_rng(11);
  Vector y(30);
  for (Eigen::Index i = 0; i < 30; ++i) y(i) = 0.5 + 0.3 * data_rng.normal();
  LogPosterior lp = constant_model_posterior(y, 1.0, 0.3);
  Rng rng(12);
  const MfviResult result = mfvi_fit(lp, MfviPosterior::init(1), 4, 1500, 0.01, rng);
  const size_t window = 50;
  auto smoothed = [&](size_t start) {
    double acc = 0.0;
    for (size_t i = start; i < start + window; ++i) acc += result.elbo_history[i];
    return acc / double(window);
  };
  const double early = smoothed(0);
  const double mid = smoothed(result.elbo_history.size() / 2 - window / 2);
  const double late = smoothed(result.elbo_history.size() - window);
  CHECK(mid >= early - 0.5);
  CHECK(late >= early - 0.5);
  CHECK(late >= mid - 0.5);
}

TEST_CASE("single-particle SVGD is one gradient ascent step, bitwise") {
  LogDensityFn target = correlated_gaussian(0.5);
  Matrix particles(1, 2);
  particles << 0.3, -0.8;
  const double lr = 0.05;
  const Matrix updated = svgd_step(particles, target, lr);
  Vector grad(2);
  target(particles.row(0).transpose(), &grad);
  const Vector expected = particles.row(0).transpose() + lr * grad;
  REQUIRE(updated.row(0).transpose() == expected);
}

TEST_CASE("SVGD particles approximate a 2D Gaussian target") {
  const double rho = 0.6;
  LogDensityFn target = correlated_gaussian(rho);
  Rng rng(13);
  Matrix particles(30, 2);
  for (Eigen::Index i = 0; i < 30; ++i)
    particles.row(i) = (2.0 * rng.normal_vector(2)).transpose();
  const Matrix finals = svgd_run(particles, target, 500, 0.1);
  const Vector mean = finals.colwise().mean();
  const Matrix centered = finals.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / double(finals.rows() - 1);
  CHECK(mean.norm() < 0.1);
  CHECK(std::abs(cov(0, 0) - 1.0) < 0.25);
  CHECK(std::abs(cov(1, 1) - 1.0) < 0.25);
  CHECK(std::abs(cov(0, 1) - rho) < 0.25);
}

TEST_CASE("coincident SVGD particles receive identical updates") {
  LogDensityFn target = correlated_gaussian(0.0);
  Matrix particles(2, 2);
  particles << 0.5, -0.2, 0.5, -0.2;
  const Matrix updated = svgd_step(particles, target, 0.1);
  REQUIRE(updated.row(0) == updated.row(1));
}

TEST_CASE("SVGD update is equivariant under particle relabeling") {
  LogDensityFn target = correlated_gaussian(0.3);
  Rng rng(14);
  Matrix particles(5, 2);
  for (Eigen::Index i = 0; i < 5; ++i) particles.row(i) = rng.normal_vector(2).transpose();
  Matrix permuted(5, 2);
  const int perm[5] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i) permuted.row(i) = particles.row(perm[i]);
  const Matrix u1 = svgd_step(particles, target, 0.1);
  const Matrix u2 = svgd_step(permuted, target, 0.1);
  for (int i = 0; i < 5; ++i) REQUIRE((u2.row(i) - u1.row(perm[i])).norm() < 1e-12);
}

TEST_CASE("MC dropout with rate zero is deterministic with zero variance") {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.layers = {Layer::dense(3, Activation::Tanh), Layer::dropout(0.0),
                 Layer::scalar_output()};
  Rng rng(15);
  const Network net = make_network(spec, rng);
  Vector x(1);
  x << 0.4;
  Rng pass_rng(16);
  const GaussianPrediction pred = mc_dropout_predict(net, x, 16, pass_rng);
  CHECK(pred.variance_total == 0.0);
  CHECK(pred.mean == forward(net, x, ForwardKind::Eval).mean);
  CHECK_FALSE(pred.split_available);
}

TEST_CASE("MC dropout on a single kept unit reproduces the Bernoulli moments") {
  const double p = 0.3;
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.layers = {Layer::dropout(p), Layer::scalar_output()};
  Rng rng(17);
  Network net = make_network(spec, rng);
  net.theta.setZero();
  net.theta(0) = 1.0;  // out = dropout(x) * 1
  Vector x(1);
  x << 1.0;
  // individual passes are 0 or 1/(1-p)
  Rng probe(18);
  for (int t = 0; t < 50; ++t) {
    const double out = forward(net, x, ForwardKind::EvalWithDropout, &probe).mean;
    REQUIRE((out == 0.0 || std::abs(out - 1.0 / (1.0 - p)) < 1e-12));
  }
  Rng pass_rng(19);
  const GaussianPrediction pred = mc_dropout_predict(net, x, 200000, pass_rng);
  CHECK(std::abs(pred.mean - 1.0) < 0.01);
  CHECK(std::abs(pred.variance_total - p / (1.0 - p)) < 0.02);
}

TEST_CASE("MC dropout predictions are reproducible from the seed") {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.layers = {Layer::dense(8, Activation::Relu), Layer::dropout(0.2),
                 Layer::gaussian_output()};
  Rng rng(20);
  const Network net = make_network(spec, rng);
  Vector x(2);
  x << 0.3, -0.5;
  Rng r1(21), r2(21);
  const GaussianPrediction a = mc_dropout_predict(net, x, 32, r1);
  const GaussianPrediction b = mc_dropout_predict(net, x, 32, r2);
  REQUIRE(a.mean == b.mean);
  REQUIRE(a.variance_total == b.variance_total);
}

TEST_CASE("MC dropout splits aleatory and epistemic for Gaussian-output networks") {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.layers = {Layer::dense(6, Activation::Tanh), Layer::dropout(0.25),
                 Layer::gaussian_output()};
  Rng rng(22);
  const Network net = make_network(spec, rng);
  Rng pass_rng(23);
  const GaussianPrediction pred = mc_dropout_predict(net, Vector::Constant(1, 0.2), 64, pass_rng);
  CHECK(pred.split_available);
  CHECK(pred.variance_total ==
        Catch::Approx(pred.variance_aleatory + pred.variance_epistemic).margin(1e-12));
}

TEST_CASE("MC dropout requires dropout layers") {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.layers = {Layer::dense(3, Activation::Relu), Layer::scalar_output()};
  Rng rng(24);
  const Network net = make_network(spec, rng);
  Rng pass_rng(25);
  REQUIRE_THROWS_AS(mc_dropout_predict(net, Vector::Zero(1), 8, pass_rng),
                    std::invalid_argument);
}

TEST_CASE("posterior predict: identical samples give zero pushforward variance") {
  Vector y(3);
  y << 0.1, 0.2, 0.3;
  LogPosterior lp = constant_model_posterior(y, 1.0, 0.4);
  Matrix samples(5, 1);
  samples.setConstant(0.7);
  Vector x = Vector::Zero(1);
  const GaussianPrediction push = posterior_predict(samples, lp, x, PredictMode::Pushforward);
  CHECK(push.variance_total == 0.0);
  const GaussianPrediction pred = posterior_predict(samples, lp, x, PredictMode::Predictive);
  CHECK(pred.variance_total == Catch::Approx(0.16).margin(1e-12));
  CHECK(pred.variance_aleatory == Catch::Approx(0.16).margin(1e-12));
}

TEST_CASE("predictive minus pushforward variance is exactly the noise variance") {
  Rng rng(27);
  Vector y(4);
  y << 1.0, 1.2, 0.8, 1.1;
  LogPosterior lp = constant_model_posterior(y, 1.0, 0.5);
  Matrix samples(20, 1);
  for (Eigen::Index i = 0; i < 20; ++i) samples(i, 0) = rng.normal();
  Vector x = Vector::Zero(1);
  const GaussianPrediction push = posterior_predict(samples, lp, x, PredictMode::Pushforward);
  const GaussianPrediction pred = posterior_predict(samples, lp, x, PredictMode::Predictive);
  REQUIRE(pred.variance_total - push.variance_total == Catch::Approx(0.25).margin(1e-14));
  REQUIRE(pred.mean == push.mean);
}

TEST_CASE("prior samples through the identity model match the analytic pushforward") {
  // f(x; theta) = theta, theta ~ N(0, prior_std^2): pushforward variance = prior_std^2
  const double prior_std = 1.5;
  Vector y(1);
  y << 0.0;
  LogPosterior lp = constant_model_posterior(y, prior_std, 1.0);
  Rng rng(28);
  Matrix samples(10000, 1);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) samples(i, 0) = prior_std * rng.normal();
  const GaussianPrediction push =
      posterior_predict(samples, lp, Vector::Zero(1), PredictMode::Pushforward);
  CHECK(std::abs(push.variance_total - prior_std * prior_std) < 0.05 * prior_std * prior_std);
}

TEST_CASE("MFVI cannot represent the correlation a sampler captures") {
  // Bayesian linear regression posterior over (intercept, slope) is strongly
  // correlated; the mean-field family is diagonal by construction.
  Rng data_rng(29);
  const Eigen::Index n = 40;
  Matrix x(n, 1);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0 + 0.2 * data_rng.normal();
    y(i) = 1.0 + 0.5 * x(i, 0) + 0.3 * data_rng.normal();
  }
  LogPosterior::ModelFn linear = [](const Eigen::Ref<const Vector>& xi, const Vector& theta,
                                    Vector* grad) {
    if (grad != nullptr) {
      (*grad)(0) += 1.0;
      (*grad)(1) += xi(0);
    }
    return theta(0) + theta(1) * xi(0);
  };
  LogPosterior lp(linear, 2, x, y, 5.0, 0.3);

  // analytic posterior covariance of the linear model
  Matrix phi(n, 2);
  phi.col(0).setOnes();
  phi.col(1) = x.col(0);
  const Matrix prec = Matrix::Identity(2, 2) / 25.0 + phi.transpose() * phi / 0.09;
  const Matrix post_cov = prec.inverse();
  const double target_corr = post_cov(0, 1) / std::sqrt(post_cov(0, 0) * post_cov(1, 1));
  REQUIRE(std::abs(target_corr) > 0.5);  // the correlation is really there

  Rng rng(30);
  const MfviResult result = mfvi_fit(lp, MfviPosterior::init(2, 0.0, 0.2), 8, 3000, 0.01, rng);
  // the variational family factorizes: samples are uncorrelated
  Rng sample_rng(31);
  Matrix q_samples(4000, 2);
  for (Eigen::Index i = 0; i < q_samples.rows(); ++i)
    q_samples.row(i) = result.posterior.sample(sample_rng).transpose();
  const Vector mean = q_samples.colwise().mean();
  const Matrix centered = q_samples.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / double(q_samples.rows() - 1);
  const double q_corr = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
  CHECK(std::abs(q_corr) < 0.1);
}

TEST_CASE("chain CSV dump uses the parameter layout") {
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.layers = {Layer::dense(2, Activation::Tanh), Layer::scalar_output()};
  Rng rng(32);
  const Network net = make_network(spec, rng);
  const std::vector<std::string> names = theta_column_names(net);
  REQUIRE(static_cast<Eigen::Index>(names.size()) == net.n_params());
  std::ostringstream os;
  Matrix samples(2, net.n_params());
  samples.setZero();
  write_samples_csv(os, samples, names);
  const std::string text = os.str();
  CHECK(text.find("layer0.w.0.0") != std::string::npos);
  CHECK(text.find("layer1.b.0") != std::string::npos);
}

TEST_CASE("adaptive MH steers the acceptance rate toward the target") {
  LogDensityFn target = [](const Vector& theta, Vector*) { return -0.5 * theta.squaredNorm(); };
  Rng rng(55);
  MhOptions opt;
  opt.adapt = true;
  opt.target_acceptance = 0.3;
  // start with a hopeless proposal scale; adaptation has to rescue it
  const MhResult result = mh_sample(target, Vector::Zero(3), 40000, 25.0, rng, opt);
  const Eigen::Index tail_start = 30000;
  // recompute the tail acceptance from the chain itself
  long accepted = 0;
  for (Eigen::Index s = tail_start + 1; s < result.chain.rows(); ++s)
    if (result.chain.row(s) != result.chain.row(s - 1)) ++accepted;
  const double tail_rate = double(accepted) / double(result.chain.rows() - tail_start - 1);
  CHECK(tail_rate > 0.15);
  CHECK(tail_rate < 0.5);
  CHECK(result.final_proposal_std < 25.0);
}
