#include "pglmm/penalty.hpp"

#include <cmath>
#include <stdexcept>

namespace pglmm {

PenaltyKind parse_penalty(const std::string& name) {
  if (name == "mcp") return PenaltyKind::MCP;
  if (name == "scad") return PenaltyKind::SCAD;
  if (name == "l1" || name == "lasso") return PenaltyKind::L1;
  throw std::invalid_argument("unknown penalty: " + name);
}

std::string penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::MCP: return "mcp";
    case PenaltyKind::SCAD: return "scad";
    case PenaltyKind::L1: return "l1";
  }
  throw std::logic_error("unreachable");
}

double default_omega(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::MCP: return 3.0;
    case PenaltyKind::SCAD: return 3.7;
    case PenaltyKind::L1: return 0.0;
  }
  throw std::logic_error("unreachable");
}

void PenaltySpec::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("penalty lambda must be nonnegative");
  if (kind == PenaltyKind::MCP && omega <= 1.0)
    throw std::invalid_argument("mcp omega must exceed 1");
  if (kind == PenaltyKind::SCAD && omega <= 2.0)
    throw std::invalid_argument("scad omega must exceed 2");
}

double penalty_value(double t, const PenaltySpec& pen) {
  if (t < 0.0) throw std::invalid_argument("penalty argument must be nonnegative");
  const double lam = pen.lambda, om = pen.omega;
  switch (pen.kind) {
    case PenaltyKind::L1:
      return lam * t;
    case PenaltyKind::MCP:
      if (t <= om * lam) return lam * t - t * t / (2.0 * om);
      return om * lam * lam / 2.0;
    case PenaltyKind::SCAD:
      if (t <= lam) return lam * t;
      if (t <= om * lam)
        return (2.0 * om * lam * t - t * t - lam * lam) / (2.0 * (om - 1.0));
      return lam * lam * (om + 1.0) / 2.0;
  }
  throw std::logic_error("unreachable");
}

double penalty_derivative(double t, const PenaltySpec& pen) {
  if (t < 0.0) throw std::invalid_argument("penalty argument must be nonnegative");
  const double lam = pen.lambda, om = pen.omega;
  switch (pen.kind) {
    case PenaltyKind::L1:
      return lam;
    case PenaltyKind::MCP:
      return std::max(0.0, lam - t / om);
    case PenaltyKind::SCAD:
      if (t <= lam) return lam;
      return std::max(0.0, om * lam - t) / (om - 1.0);
  }
  throw std::logic_error("unreachable");
}

double scalar_prox(double zeta, double v, const PenaltySpec& pen) {
  if (!(v > 0.0)) throw std::invalid_argument("prox curvature must be positive");
  const double lam = pen.lambda, om = pen.omega;
  const double a = std::abs(zeta);
  const double s = zeta >= 0.0 ? 1.0 : -1.0;
  switch (pen.kind) {
    case PenaltyKind::L1:
      return a <= lam ? 0.0 : s * (a - lam) / v;
    case PenaltyKind::MCP:
      if (v * om <= 1.0) throw std::invalid_argument("mcp prox requires v*omega > 1");
      if (a <= lam) return 0.0;
      if (a <= v * om * lam) return s * (a - lam) / (v - 1.0 / om);
      return zeta / v;
    case PenaltyKind::SCAD: {
      if (v * (om - 1.0) <= 1.0) throw std::invalid_argument("scad prox requires v*(omega-1) > 1");
      if (a <= lam) return 0.0;
      if (a <= lam * (v + 1.0)) return s * (a - lam) / v;
      if (a <= v * om * lam)
        return s * (a - om * lam / (om - 1.0)) / (v - 1.0 / (om - 1.0));
      return zeta / v;
    }
  }
  throw std::logic_error("unreachable");
}

Eigen::VectorXd group_prox(const Eigen::VectorXd& zeta, double v, const PenaltySpec& pen) {
  const double norm = zeta.norm();
  if (norm == 0.0) return Eigen::VectorXd::Zero(zeta.size());
  const double shrunk = scalar_prox(norm, v, pen);
  return (shrunk / norm) * zeta;
}

}  // namespace pglmm
