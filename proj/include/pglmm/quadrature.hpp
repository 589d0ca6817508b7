#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace pglmm {

// Physicists' Gauss-Hermite rule: integral of exp(-x^2) f(x) dx
// approximated by sum w_i f(x_i).
struct GhRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

GhRule gauss_hermite(int n);

struct NmOptions {
  int max_iter = 400;
  double tol = 1e-9;
  double step = 0.5;
};

// Standard Nelder-Mead minimizer, deterministic given the start point.
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, const NmOptions& opts = {},
                            double* fmin = nullptr);

// Sufficient statistics of one study for the univariate screening model:
// row counts and response sums split by the binary feature value.
struct ScreenStudyCounts {
  double n0 = 0.0, s0 = 0.0;  // rows with x = 0, and their response sum
  double n1 = 0.0, s1 = 0.0;  // rows with x = 1
};

// Marginal log likelihood of the random-intercept random-slope logistic
// model, integrated per study by adaptive Gauss-Hermite quadrature.
// params = (beta0, beta1, log sigma0, log sigma1).
double marginal_loglik_2re(const std::vector<ScreenStudyCounts>& studies,
                           const Eigen::VectorXd& params, int nodes = 9);

// Intercept-only reduction: params = (beta0, log sigma0).
double marginal_loglik_1re(const std::vector<ScreenStudyCounts>& studies,
                           const Eigen::VectorXd& params, int nodes = 9);

}  // namespace pglmm
