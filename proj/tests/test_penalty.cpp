#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "pglmm/penalty.hpp"

using namespace pglmm;

namespace {

PenaltySpec mcp(double lambda, double omega = 3.0) { return {PenaltyKind::MCP, lambda, omega}; }
PenaltySpec scad(double lambda, double omega = 3.7) { return {PenaltyKind::SCAD, lambda, omega}; }
PenaltySpec l1(double lambda) { return {PenaltyKind::L1, lambda, 0.0}; }

double prox_objective(double b, double zeta, double v, const PenaltySpec& pen) {
  return 0.5 * v * b * b - zeta * b + penalty_value(std::abs(b), pen);
}

}  // namespace

TEST_CASE("penalty parsing") {
  CHECK(parse_penalty("mcp") == PenaltyKind::MCP);
  CHECK(parse_penalty("scad") == PenaltyKind::SCAD);
  CHECK(parse_penalty("l1") == PenaltyKind::L1);
  CHECK_THROWS_AS(parse_penalty("ridge"), std::invalid_argument);
  CHECK(penalty_name(PenaltyKind::MCP) == "mcp");
  CHECK(default_omega(PenaltyKind::MCP) == doctest::Approx(3.0));
  CHECK(default_omega(PenaltyKind::SCAD) == doctest::Approx(3.7));
}

TEST_CASE("MCP value: quadratic piece then plateau") {
  CHECK(penalty_value(0.0, mcp(1.0)) == 0.0);
  CHECK(penalty_value(1.5, mcp(1.0)) == doctest::Approx(1.125).epsilon(1e-12));
  CHECK(penalty_value(5.0, mcp(1.0)) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(penalty_value(3.0, mcp(1.0)) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK_THROWS_AS(penalty_value(-0.1, mcp(1.0)), std::invalid_argument);
}

TEST_CASE("penalty derivatives") {
  CHECK(penalty_derivative(1e-12, mcp(1.0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(penalty_derivative(3.0, mcp(1.0)) == doctest::Approx(0.0));
  CHECK(penalty_derivative(7.0, l1(0.4)) == doctest::Approx(0.4));
  CHECK(penalty_derivative(0.2, scad(1.0)) == doctest::Approx(1.0));
  CHECK(penalty_derivative(2.0, scad(1.0)) ==
        doctest::Approx((3.7 * 1.0 - 2.0) / (3.7 - 1.0)).epsilon(1e-12));
  CHECK(penalty_derivative(5.0, scad(1.0)) == doctest::Approx(0.0));
}

TEST_CASE("penalty value is continuous, nondecreasing, below lambda*t") {
  for (PenaltySpec pen : {mcp(0.8), scad(0.8), l1(0.8)}) {
    double prev = 0.0;
    for (int i = 0; i <= 600; ++i) {
      const double t = 0.01 * i;
      const double v = penalty_value(t, pen);
      CHECK(v >= prev - 1e-12);
      CHECK(v <= pen.lambda * t + 1e-12);
      if (i > 0) {
        const double step = std::abs(v - penalty_value(t - 0.01, pen));
        CHECK(step <= pen.lambda * 0.01 + 1e-12);
      }
      prev = v;
    }
  }
}

TEST_CASE("scalar prox closed forms at v=1") {
  CHECK(scalar_prox(0.5, 1.0, mcp(1.0)) == 0.0);
  CHECK(scalar_prox(2.0, 1.0, mcp(1.0)) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(scalar_prox(4.0, 1.0, mcp(1.0)) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(scalar_prox(-2.0, 1.0, mcp(1.0)) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(scalar_prox(0.3, 1.0, l1(0.4)) == 0.0);
  CHECK(scalar_prox(1.0, 1.0, l1(0.4)) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(scalar_prox(1.0, 0.2, mcp(1.0, 3.0)), std::invalid_argument);
  CHECK_THROWS_AS(scalar_prox(1.0, 0.3, scad(1.0, 3.7)), std::invalid_argument);
}

TEST_CASE("prox boundary ties resolve to zero") {
  CHECK(scalar_prox(1.0, 1.0, mcp(1.0)) == 0.0);
  CHECK(scalar_prox(-1.0, 1.0, mcp(1.0)) == 0.0);
  CHECK(scalar_prox(0.4, 1.0, l1(0.4)) == 0.0);
}

TEST_CASE("prox against dense grid search") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> zdist(-4.0, 4.0);
  std::uniform_real_distribution<double> ldist(0.05, 2.0);
  std::uniform_real_distribution<double> vdist(0.6, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const double zeta = zdist(rng);
    const double lambda = ldist(rng);
    double v = vdist(rng);
    PenaltySpec pen;
    switch (rep % 3) {
      case 0: pen = mcp(lambda); v = std::max(v, 1.0 / pen.omega + 0.05); break;
      case 1: pen = scad(lambda); v = std::max(v, 1.0 / (pen.omega - 1.0) + 0.05); break;
      default: pen = l1(lambda); break;
    }
    const double b = scalar_prox(zeta, v, pen);
    const double fb = prox_objective(b, zeta, v, pen);
    const double span = std::abs(zeta) / v + 1.0;
    for (int i = -400; i <= 400; ++i) {
      const double cand = span * i / 400.0;
      CHECK(fb <= prox_objective(cand, zeta, v, pen) + 1e-8);
    }
    CHECK(b * zeta >= 0.0);
    CHECK(std::abs(b) <= std::abs(zeta) / v + 1e-12);
  }
}

TEST_CASE("SCAD prox three-piece closed form") {
  const PenaltySpec pen = scad(1.0);
  CHECK(scalar_prox(0.9, 1.0, pen) == 0.0);
  CHECK(scalar_prox(1.6, 1.0, pen) == doctest::Approx(0.6).epsilon(1e-12));
  const double zeta = 2.5;
  const double expect = (zeta - 3.7 / 2.7) / (1.0 - 1.0 / 2.7);
  CHECK(scalar_prox(zeta, 1.0, pen) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(scalar_prox(4.0, 1.0, pen) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("group prox shrinks the norm and keeps direction") {
  Eigen::VectorXd zeta(2);
  zeta << 1.2, 1.6;
  Eigen::VectorXd out = group_prox(zeta, 1.0, mcp(1.0));
  CHECK(out(0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(out(1) == doctest::Approx(1.2).epsilon(1e-12));

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  CHECK(group_prox(zero, 1.0, mcp(1.0)).isZero(0.0));

  Eigen::VectorXd small(2);
  small << 0.3, 0.4;
  CHECK(group_prox(small, 1.0, mcp(1.0)).isZero(0.0));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd z(4);
    for (int i = 0; i < 4; ++i) z(i) = 2.0 * nd(rng);
    const double v = 1.3;
    Eigen::VectorXd g = group_prox(z, v, mcp(0.7));
    const double mag = scalar_prox(z.norm(), v, mcp(0.7));
    if (mag == 0.0) {
      CHECK(g.isZero(0.0));
    } else {
      Eigen::VectorXd expect = mag * z / z.norm();
      CHECK((g - expect).lpNorm<Eigen::Infinity>() < 1e-12);
      for (int i = 0; i < 4; ++i)
        CHECK((g(i) != 0.0) == (z(i) != 0.0));
    }
  }
}

TEST_CASE("penalty spec validation") {
  CHECK_THROWS_AS(mcp(-1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(mcp(1.0, 0.9).validate(), std::invalid_argument);
  CHECK_THROWS_AS(scad(1.0, 1.9).validate(), std::invalid_argument);
  CHECK_NOTHROW(l1(0.0).validate());
}
