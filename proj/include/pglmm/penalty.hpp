#pragma once

#include <Eigen/Dense>
#include <string>

namespace pglmm {

enum class PenaltyKind { MCP, SCAD, L1 };

PenaltyKind parse_penalty(const std::string& name);
std::string penalty_name(PenaltyKind k);

double default_omega(PenaltyKind k);

// Folded-concave penalty rho(t; lambda, omega) evaluated on t >= 0.
// omega is the concavity parameter (ignored for L1).
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::MCP;
  double lambda = 0.0;
  double omega = 3.0;

  void validate() const;
};

double penalty_value(double t, const PenaltySpec& pen);
double penalty_derivative(double t, const PenaltySpec& pen);

// Minimizer of (v/2) x^2 - zeta x + rho(|x|). Requires v large enough
// that the objective is convex on each piece: v > 1/omega for MCP,
// v > 1/(omega-1) for SCAD, any v > 0 for L1.
double scalar_prox(double zeta, double v, const PenaltySpec& pen);

// Groupwise version: shrinks the norm of zeta by scalar_prox and keeps
// the direction. Zero stays zero.
Eigen::VectorXd group_prox(const Eigen::VectorXd& zeta, double v, const PenaltySpec& pen);

}  // namespace pglmm
