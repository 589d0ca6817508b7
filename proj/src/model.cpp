#include "pglmm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pglmm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double invlogit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1pexp(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double log_density(double y, double eta, const Family& family, double tau) {
  if (family.kind == FamilyKind::Bernoulli) return y * eta - log1pexp(eta);
  const double r = y - eta;
  return -0.5 * (kLog2Pi + std::log(tau)) - r * r / (2.0 * tau);
}

double log_normal_prior(const Eigen::VectorXd& alpha) {
  return -0.5 * (static_cast<double>(alpha.size()) * kLog2Pi + alpha.squaredNorm());
}

double linear_predictor(const Eigen::RowVectorXd& x, const Eigen::VectorXd& beta,
                        const Eigen::RowVectorXd& z, const Eigen::MatrixXd& Gamma,
                        const Eigen::VectorXd& alpha) {
  return x.dot(beta) + z.dot(Gamma * alpha);
}

int gamma_dim(int q, CovStructure structure) {
  return structure == CovStructure::FullLowerTriangular ? q * (q + 1) / 2 : q;
}

int group_size(int t, CovStructure structure) {
  return structure == CovStructure::FullLowerTriangular ? t + 1 : 1;
}

int group_offset(int t, CovStructure structure) {
  return structure == CovStructure::FullLowerTriangular ? t * (t + 1) / 2 : t;
}

Eigen::MatrixXd build_jq(int q, CovStructure structure) {
  if (q <= 0) throw std::invalid_argument("q must be positive");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q * q, gamma_dim(q, structure));
  for (int t = 0; t < q; ++t) {
    const int off = group_offset(t, structure);
    if (structure == CovStructure::FullLowerTriangular) {
      for (int u = 0; u <= t; ++u) J(u * q + t, off + u) = 1.0;
    } else {
      J(t * q + t, off) = 1.0;
    }
  }
  return J;
}

AugmentedDesign augment_design(const StudyData& study, const Eigen::MatrixXd& draws,
                               CovStructure structure) {
  const int n = study.n();
  const int q = study.q();
  const int L = static_cast<int>(draws.rows());
  if (static_cast<int>(draws.cols()) != q)
    throw std::invalid_argument("draw width does not match random-effect count");

  const Eigen::MatrixXd Z = study.Z();
  const int d = gamma_dim(q, structure);

  AugmentedDesign out;
  out.Xrep.resize(n * L, study.p());
  out.Zt.resize(n * L, d);
  out.yrep.resize(n * L);

  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      const int row = i * L + l;
      out.Xrep.row(row) = study.X.row(i);
      out.yrep(row) = study.y(i);
      for (int t = 0; t < q; ++t) {
        const int off = group_offset(t, structure);
        if (structure == CovStructure::FullLowerTriangular) {
          for (int u = 0; u <= t; ++u) out.Zt(row, off + u) = Z(i, t) * draws(l, u);
        } else {
          out.Zt(row, off) = Z(i, t) * draws(l, t);
        }
      }
    }
  }
  return out;
}

}  // namespace pglmm
