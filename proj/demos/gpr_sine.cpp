// Fit a GPR to noisy 1D sine observations, print predictions across the
// input range, and summarize the uncertainty quality on a held-out set.

#include "uqkit/data.hpp"
#include "uqkit/evaluation.hpp"
#include "uqkit/gpr.hpp"

#include <cstdio>

using namespace uqkit;

int main() {
  const Dataset train = gen_toy_1d(8, -4.0, 4.0, 7);
  const Dataset test = gen_toy_1d(200, -5.0, 5.0, 8);

  GpFitOptions opt;
  opt.noise_std = 0.1;
  opt.optimize = true;
  opt.restarts = 4;
  Rng rng(1);
  const GpModel model = gp_fit(train.x, train.y, KernelSpec::squared_exponential(1.0, 1.0), opt,
                               rng);
  std::printf("fitted hyperparameters: l = %.3f, sigma_f = %.3f, noise = %.3f, LML = %.3f\n",
              model.kernel.length_scales(0), model.kernel.sigma_f, model.noise_std,
              log_marginal_likelihood(model));

  std::printf("\n%8s %10s %10s %10s\n", "x", "mean", "std", "dist");
  for (double x = -5.0; x <= 5.0; x += 1.0) {
    Matrix xq(1, 1);
    xq << x;
    const GaussianPrediction p = gp_predict(model, xq, true)[0];
    std::printf("%8.2f %10.4f %10.4f %10.4f\n", x, p.mean, p.std_total(),
                gp_distance_to_train(model, xq.row(0).transpose()));
  }

  const Predictions preds = gp_predict(model, test.x, true);
  std::vector<double> targets(test.y.data(), test.y.data() + test.y.size());
  const EvaluationReport report = evaluate_predictions(preds, targets);
  std::printf("\nheld-out quality: ECE = %.4f, miscalibration area = %.4f, NLL = %.4f, "
              "u-pool area = %.4f, AUSE = %.4f\n",
              report.ece_uniform, report.miscalibration, report.nll_mean, report.u_pool_area,
              report.sparsification.ause);
  return 0;
}
