#include "pglmm/glm.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pglmm/model.hpp"

namespace pglmm {

namespace {

constexpr double kLog2PiGlm = 1.8378770664093454836;

Eigen::VectorXd mean_response(const Eigen::VectorXd& eta, const Family& family) {
  if (family.kind == FamilyKind::Gaussian) return eta;
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) mu(i) = invlogit(eta(i));
  return mu;
}

double curvature_bound(const Family& family, double tau) {
  return family.kind == FamilyKind::Bernoulli ? 0.25 : 1.0 / tau;
}

double group_gram_max_eig(const Eigen::MatrixXd& Xt) {
  if (Xt.cols() == 1) return Xt.col(0).squaredNorm();
  Eigen::MatrixXd gram = Xt.transpose() * Xt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// Lowest curvature the prox subproblem tolerates; raising v above the
// quadratic bound keeps the surrogate a majorizer, so flooring is safe.
double prox_floor(const PenaltySpec& pen) {
  switch (pen.kind) {
    case PenaltyKind::MCP: return (1.0 + 1e-8) / pen.omega;
    case PenaltyKind::SCAD: return (1.0 + 1e-8) / (pen.omega - 1.0);
    case PenaltyKind::L1: return 0.0;
  }
  return 0.0;
}

}  // namespace

double neg_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& offset, const Eigen::VectorXd& coef,
                          const Family& family, double tau) {
  Eigen::VectorXd eta = X * coef;
  if (offset.size() > 0) eta += offset;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) nll -= log_density(y(i), eta(i), family, tau);
  return nll;
}

double penalized_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& offset, const Eigen::VectorXd& coef,
                           const Family& family, double tau, double weight,
                           const std::vector<GroupSpec>& groups, const PenaltySpec& pen) {
  double obj = weight * neg_log_likelihood(X, y, offset, coef, family, tau);
  for (const auto& g : groups)
    if (g.penalized) obj += penalty_value(coef.segment(g.offset, g.size).norm(), pen);
  return obj;
}

CdResult solve_grouped_cd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& offset, const Family& family, double tau,
                          double weight, const std::vector<GroupSpec>& groups,
                          const PenaltySpec& pen, const Eigen::VectorXd& warm,
                          const CdOptions& opts) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw std::invalid_argument("response length does not match design");
  if (warm.size() != p) throw std::invalid_argument("warm start length does not match design");
  pen.validate();

  const double c = curvature_bound(family, tau);
  const double gscale = family.kind == FamilyKind::Gaussian ? 1.0 / tau : 1.0;
  const double vfloor = prox_floor(pen);

  std::vector<double> v(groups.size());
  for (std::size_t t = 0; t < groups.size(); ++t) {
    v[t] = weight * c * group_gram_max_eig(X.middleCols(groups[t].offset, groups[t].size));
    if (groups[t].penalized && v[t] > 0.0) v[t] = std::max(v[t], vfloor);
  }

  CdResult res;
  res.coef = warm;
  Eigen::VectorXd eta(n), r(n), grad_anchor(p);

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    res.outer_iters = outer + 1;
    eta = X * res.coef;
    if (offset.size() > 0) eta += offset;
    const Eigen::VectorXd mu = mean_response(eta, family);
    grad_anchor = (weight * gscale) * (X.transpose() * (mu - y));

    const Eigen::VectorXd anchor = res.coef;
    r.setZero();

    double inner_move = 0.0;
    for (int inner = 0; inner < opts.max_inner; ++inner) {
      inner_move = 0.0;
      for (std::size_t t = 0; t < groups.size(); ++t) {
        const auto& g = groups[t];
        if (v[t] <= 0.0) {
          if (g.penalized) res.coef.segment(g.offset, g.size).setZero();
          continue;
        }
        const auto Xt = X.middleCols(g.offset, g.size);
        Eigen::VectorXd grad_t = grad_anchor.segment(g.offset, g.size) +
                                 weight * c * (Xt.transpose() * r);
        Eigen::VectorXd old = res.coef.segment(g.offset, g.size);
        Eigen::VectorXd zeta = v[t] * old - grad_t;
        Eigen::VectorXd neu = g.penalized ? group_prox(zeta, v[t], pen)
                                          : Eigen::VectorXd(zeta / v[t]);
        Eigen::VectorXd delta = neu - old;
        const double move = delta.lpNorm<Eigen::Infinity>();
        if (move > 0.0) {
          res.coef.segment(g.offset, g.size) = neu;
          r += Xt * delta;
          inner_move = std::max(inner_move, move);
        }
      }
      if (inner_move < 0.1 * opts.tol) break;
    }

    if ((res.coef - anchor).lpNorm<Eigen::Infinity>() < opts.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

GlmFit irls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Family& family,
                int max_iter, double tol) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  GlmFit fit;
  fit.beta = Eigen::VectorXd::Zero(p);

  if (family.kind == FamilyKind::Gaussian) {
    fit.beta = X.colPivHouseholderQr().solve(y);
    const double rss = (y - X * fit.beta).squaredNorm();
    const double tau_hat = std::max(rss / n, 1e-12);
    fit.loglik = -0.5 * n * ((kLog2PiGlm + std::log(tau_hat)) + 1.0);
    fit.converged = true;
    return fit;
  }

  const Eigen::VectorXd none;
  double nll = neg_log_likelihood(X, y, none, fit.beta, family, 1.0);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd eta = X * fit.beta;
    Eigen::VectorXd mu = mean_response(eta, family);
    Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    w = w.array().max(1e-10);
    Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd score = X.transpose() * (y - mu);
    Eigen::VectorXd step = XtWX.ldlt().solve(score);

    double scale = 1.0;
    Eigen::VectorXd cand;
    double cand_nll = nll;
    for (int h = 0; h < 30; ++h) {
      cand = fit.beta + scale * step;
      cand_nll = neg_log_likelihood(X, y, none, cand, family, 1.0);
      if (cand_nll <= nll + 1e-14) break;
      scale *= 0.5;
    }
    const double move = (cand - fit.beta).lpNorm<Eigen::Infinity>();
    fit.beta = cand;
    nll = cand_nll;
    if (move < tol * (1.0 + fit.beta.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      break;
    }
  }
  fit.loglik = -nll;
  fit.separated = !fit.converged || fit.beta.lpNorm<Eigen::Infinity>() > 15.0;
  return fit;
}

GlmFit penalized_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Family& family,
                     const PenaltySpec& pen, const std::vector<int>& unpenalized_cols,
                     const Eigen::VectorXd& warm, const CdOptions& opts) {
  const Eigen::Index p = X.cols();
  std::vector<GroupSpec> groups(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    groups[j] = {static_cast<int>(j), 1, true};
    for (int u : unpenalized_cols)
      if (u == j) groups[j].penalized = false;
  }
  Eigen::VectorXd start = warm.size() == p ? warm : Eigen::VectorXd::Zero(p);
  CdResult cd = solve_grouped_cd(X, y, {}, family, 1.0, 1.0, groups, pen, start, opts);

  GlmFit fit;
  fit.beta = cd.coef;
  fit.converged = cd.converged;
  fit.loglik = -neg_log_likelihood(X, y, {}, fit.beta, family, 1.0);
  if (family.kind == FamilyKind::Gaussian) {
    const double rss = (y - X * fit.beta).squaredNorm();
    const double tau_hat = std::max(rss / X.rows(), 1e-12);
    fit.loglik = -0.5 * X.rows() * ((kLog2PiGlm + std::log(tau_hat)) + 1.0);
  }
  return fit;
}

double glm_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Family& family,
                      const std::vector<int>& unpenalized_cols) {
  double mu0;
  if (family.kind == FamilyKind::Bernoulli) {
    mu0 = std::clamp(y.mean(), 1e-8, 1.0 - 1e-8);
  } else {
    mu0 = y.mean();
  }
  const Eigen::VectorXd resid = y.array() - mu0;
  double lam = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    bool skip = false;
    for (int u : unpenalized_cols)
      if (u == j) skip = true;
    if (skip) continue;
    lam = std::max(lam, std::abs(X.col(j).dot(resid)));
  }
  return lam;
}

BicPath bic_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Family& family,
                 PenaltyKind kind, int n_lambda, double min_ratio,
                 const std::vector<int>& unpenalized_cols) {
  if (n_lambda < 1) throw std::invalid_argument("path needs at least one lambda");
  const double lam_max = glm_lambda_max(X, y, family, unpenalized_cols);
  const Eigen::Index n = X.rows();

  BicPath path;
  path.lambdas.resize(n_lambda);
  for (int i = 0; i < n_lambda; ++i) {
    const double f = n_lambda == 1 ? 1.0
                                   : std::exp(std::log(min_ratio) * i / (n_lambda - 1.0));
    path.lambdas[i] = lam_max * f;
  }

  double best_bic = std::numeric_limits<double>::infinity();
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(X.cols());
  for (int i = 0; i < n_lambda; ++i) {
    PenaltySpec pen{kind, path.lambdas[i], default_omega(kind)};
    GlmFit fit = penalized_glm(X, y, family, pen, unpenalized_cols, warm);
    warm = fit.beta;
    int df = 0;
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
      if (fit.beta(j) != 0.0) ++df;
    const double bic = -2.0 * fit.loglik + df * std::log(static_cast<double>(n));
    path.bic.push_back(bic);
    if (bic < best_bic) {
      best_bic = bic;
      path.best = fit;
      path.best_lambda = path.lambdas[i];
    }
  }
  return path;
}

}  // namespace pglmm
