#pragma once

#include <Eigen/Dense>

#include "pglmm/types.hpp"

namespace pglmm {

double invlogit(double x);

// log(1 + e^x) without overflow.
double log1pexp(double x);

// Log density of one observation at linear predictor eta. tau is the
// gaussian variance and is ignored for bernoulli.
double log_density(double y, double eta, const Family& family, double tau);

// Standard normal log density of a random-effect draw.
double log_normal_prior(const Eigen::VectorXd& alpha);

// Linear predictor eta = x'beta + z'Gamma alpha for one observation.
double linear_predictor(const Eigen::RowVectorXd& x, const Eigen::VectorXd& beta,
                        const Eigen::RowVectorXd& z, const Eigen::MatrixXd& Gamma,
                        const Eigen::VectorXd& alpha);

int gamma_dim(int q, CovStructure structure);
int group_size(int t, CovStructure structure);
int group_offset(int t, CovStructure structure);

// 0/1 matrix J with vec(Gamma) = J * gamma_flat, vec taken column-major.
// Shape q^2 x gamma_dim(q, structure).
Eigen::MatrixXd build_jq(int q, CovStructure structure);

// Monte Carlo augmented design for one study. Row order is subject-major:
// subject i's L rows are contiguous, one per draw.
//   Xrep: (n*L) x p, subject rows replicated across draws
//   Zt:   (n*L) x gamma_dim, row (i,l) = (alpha_l (x) z_i)' J
//   yrep: (n*L)
struct AugmentedDesign {
  Eigen::MatrixXd Xrep;
  Eigen::MatrixXd Zt;
  Eigen::VectorXd yrep;
};

// draws is L x q, one random-effect draw per row.
AugmentedDesign augment_design(const StudyData& study, const Eigen::MatrixXd& draws,
                               CovStructure structure);

}  // namespace pglmm
