#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "pglmm/glm.hpp"
#include "pglmm/model.hpp"
#include "pglmm/penalty.hpp"
#include "pglmm/sampler.hpp"
#include "pglmm/types.hpp"

namespace pglmm {

struct FitConfig {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  PenaltyKind penalty1 = PenaltyKind::MCP;
  PenaltyKind penalty2 = PenaltyKind::MCP;
  double omega1 = 3.0;
  double omega2 = 3.0;
  int max_em_iter = 100;
  double epsilon = 1e-3;
  int convergence_window = 3;
  CovStructure structure = CovStructure::FullLowerTriangular;
  std::vector<int> unpenalized_beta = {0};
  bool penalize_random_intercept = true;
  double gamma_init = 0.1;
  SamplerConfig sampler;  // n_draws is L0; the schedule grows it
  int draws_cap = 2000;
  std::optional<Theta> warm_start;
  int threads = 1;
  CdOptions cd;

  PenaltySpec pen1() const { return {penalty1, lambda1, omega1}; }
  PenaltySpec pen2() const { return {penalty2, lambda2, omega2}; }
};

// Monte Carlo sample size at EM iteration s (1-based): the chain grows
// geometrically from n_draws up to draws_cap.
int draw_schedule(int em_iter, int l0, int cap);

struct EStepResult {
  std::vector<Eigen::MatrixXd> draws;
  std::vector<SamplerDiagnostics> diag;
  std::vector<Eigen::VectorXd> final_states;
  double q1 = 0.0;
  double q2 = 0.0;
  double q1_mcse = 0.0;
};

// Q1/Q2 of theta evaluated on externally supplied draws (one matrix per
// study, common row count L).
std::pair<double, double> q_on_draws(const MultiStudyDataset& data, const Theta& theta,
                                     const std::vector<Eigen::MatrixXd>& draws);

EStepResult estep(const MultiStudyDataset& data, const Theta& theta,
                  const SamplerConfig& config, int threads = 1,
                  const std::vector<Eigen::VectorXd>& inits = {},
                  const std::vector<std::uint64_t>& seeds = {});

// Stacks per-study augmented designs in study order.
AugmentedDesign augment_all(const MultiStudyDataset& data,
                            const std::vector<Eigen::MatrixXd>& draws, CovStructure structure);

// Q1 on an augmented design: (1/L) sum of row negative log densities at
// eta = Xrep beta + Zt gamma.
double q1_value(const AugmentedDesign& aug, int L, const Family& family,
                const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma_flat, double tau);

// Gradient of q1_value, stacked as (d/dbeta, d/dgamma).
Eigen::VectorXd q1_gradient(const AugmentedDesign& aug, int L, const Family& family,
                            const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma_flat,
                            double tau);

Eigen::VectorXd mstep_beta(const AugmentedDesign& aug, int L, const Family& family,
                           const Eigen::VectorXd& gamma_flat, double tau,
                           const PenaltySpec& pen, const std::vector<int>& unpenalized,
                           const Eigen::VectorXd& warm, const CdOptions& opts = {});

struct GammaStep {
  std::vector<Eigen::VectorXd> gamma;
  std::vector<bool> flipped;  // diagonal groups reflected to nonnegative
};

GammaStep mstep_gamma(const AugmentedDesign& aug, int L, const Family& family,
                      const Eigen::VectorXd& beta, double tau, const PenaltySpec& pen,
                      CovStructure structure, int q, bool penalize_intercept_group,
                      const std::vector<Eigen::VectorXd>& warm, const CdOptions& opts = {});

// Gaussian dispersion by Newton-Raphson; bernoulli returns 1.
double mstep_tau(const AugmentedDesign& aug, int L, const Family& family,
                 const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma_flat,
                 double tau_init);

struct FitResult {
  Theta theta;
  SelectedSets selected;
  std::vector<double> q1_trace;
  std::vector<double> q2_trace;
  bool converged = false;
  int iterations = 0;
  std::vector<SamplerDiagnostics> diagnostics;
  std::vector<Eigen::MatrixXd> final_draws;  // posterior draws at theta
  double q1_final = 0.0;
  double q2_final = 0.0;
};

FitResult fit(const MultiStudyDataset& data, const FitConfig& config);

// Fixed-effect predictions: random effects enter at their zero mean.
Eigen::VectorXd predict(const Theta& theta, const Family& family, const Eigen::MatrixXd& X_new);

}  // namespace pglmm
