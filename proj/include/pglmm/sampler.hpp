#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pglmm/types.hpp"

namespace pglmm {

struct SamplerConfig {
  int n_draws = 100;
  int burnin = 200;
  int thin = 1;
  double proposal_scale = 1.0;
  std::uint64_t seed = 0;
};

struct SamplerDiagnostics {
  Eigen::VectorXd acceptance_rate;
  int chain_length = 0;
};

struct SamplerResult {
  Eigen::MatrixXd draws;  // n_draws x q
  SamplerDiagnostics diag;
  Eigen::VectorXd final_state;
};

// Coordinate-wise Metropolis-Hastings targeting the posterior of the
// study's random effects, proportional to f(y|X,alpha;theta) phi(alpha).
// Each sweep proposes an independent N(0, proposal_scale^2) candidate
// per coordinate and accepts by the full posterior ratio.
SamplerResult sample_posterior(const StudyData& study, const Family& family,
                               const Theta& theta, const SamplerConfig& config,
                               const Eigen::VectorXd& init = {});

}  // namespace pglmm
