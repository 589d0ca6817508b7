#pragma once

// Test-only oracles, kept independent of the solvers under test: a
// proximal-gradient reference for penalized GLMs (first-order method, no
// coordinate descent, no MM anchoring) built on the grid-search-verified
// prox operators, plus small data generators.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "pglmm/glm.hpp"
#include "pglmm/model.hpp"
#include "pglmm/penalty.hpp"
#include "pglmm/types.hpp"

namespace ref {

inline Eigen::VectorXd smooth_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& offset,
                                       const pglmm::Family& family, double tau, double weight,
                                       const Eigen::VectorXd& coef) {
  Eigen::VectorXd eta = offset + X * coef;
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    mu(i) = family.kind == pglmm::FamilyKind::Bernoulli ? pglmm::invlogit(eta(i)) : eta(i);
  const double scale = family.kind == pglmm::FamilyKind::Bernoulli ? 1.0 : 1.0 / tau;
  return weight * scale * (X.transpose() * (mu - y));
}

inline Eigen::VectorXd ista_penalized_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& offset,
                                          const pglmm::Family& family, double tau, double weight,
                                          const std::vector<pglmm::GroupSpec>& groups,
                                          const pglmm::PenaltySpec& pen, int max_iter = 50000,
                                          double tol = 1e-12) {
  const double curv = family.kind == pglmm::FamilyKind::Bernoulli ? 0.25 : 1.0 / tau;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X);
  const double v = weight * curv * es.eigenvalues().maxCoeff() * 1.01 + 1e-12;

  Eigen::VectorXd coef = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd grad = smooth_gradient(X, y, offset, family, tau, weight, coef);
    Eigen::VectorXd next = coef;
    for (const auto& g : groups) {
      Eigen::VectorXd zeta = v * coef.segment(g.offset, g.size) - grad.segment(g.offset, g.size);
      if (!g.penalized)
        next.segment(g.offset, g.size) = zeta / v;
      else if (g.size == 1)
        next(g.offset) = pglmm::scalar_prox(zeta(0), v, pen);
      else
        next.segment(g.offset, g.size) = pglmm::group_prox(zeta, v, pen);
    }
    const double change = (next - coef).lpNorm<Eigen::Infinity>();
    coef = next;
    if (change < tol) break;
  }
  return coef;
}

struct LogisticToy {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

inline LogisticToy logistic_data(std::mt19937_64& rng, int n, int p,
                                 const Eigen::VectorXd& beta) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  LogisticToy toy;
  toy.X.resize(n, p);
  toy.y.resize(n);
  for (int i = 0; i < n; ++i) {
    toy.X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) toy.X(i, j) = nd(rng);
    toy.y(i) = ud(rng) < pglmm::invlogit(toy.X.row(i).dot(beta)) ? 1.0 : 0.0;
  }
  return toy;
}

inline std::vector<pglmm::GroupSpec> singleton_groups(int p, int first_penalized = 1) {
  std::vector<pglmm::GroupSpec> groups;
  for (int j = 0; j < p; ++j) groups.push_back({j, 1, j >= first_penalized});
  return groups;
}

}  // namespace ref
