#include "pglmm/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pglmm/model.hpp"

namespace pglmm {

namespace {

constexpr double kLogPi = 1.1447298858494001741;
constexpr double kLog2 = 0.6931471805599453094;
constexpr double kLog2PiQ = 1.8378770664093454836;

// Screening explores log-sigma freely; beyond these bounds the
// likelihood surface is flat, so the scale is pinned for stability.
double clamp_sigma(double log_sigma) { return std::exp(std::clamp(log_sigma, -12.0, 6.0)); }

double lse_accumulate(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

struct CellLik {
  // log-likelihood contribution s*eta - n*log(1+e^eta) and derivatives
  static double value(double n, double s, double eta) { return s * eta - n * log1pexp(eta); }
  static double grad(double n, double s, double eta) { return s - n * invlogit(eta); }
  static double curv(double n, double eta) {
    const double mu = invlogit(eta);
    return n * mu * (1.0 - mu);
  }
};

}  // namespace

GhRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GhRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  const double sqrt_pi = std::exp(0.5 * kLogPi);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights(i) = sqrt_pi * v0 * v0;
  }
  return rule;
}

Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, const NmOptions& opts, double* fmin) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> x(n + 1, x0);
  std::vector<double> fx(n + 1);
  for (int i = 1; i <= n; ++i) x[i](i - 1) += opts.step;
  for (int i = 0; i <= n; ++i) fx[i] = f(x[i]);

  std::vector<int> ord(n + 1);
  for (int it = 0; it < opts.max_iter; ++it) {
    for (int i = 0; i <= n; ++i) ord[i] = i;
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    {
      std::vector<Eigen::VectorXd> xs(n + 1);
      std::vector<double> fs(n + 1);
      for (int i = 0; i <= n; ++i) {
        xs[i] = x[ord[i]];
        fs[i] = fx[ord[i]];
      }
      x = std::move(xs);
      fx = std::move(fs);
    }
    if (fx[n] - fx[0] < opts.tol * (1.0 + std::abs(fx[0]))) break;

    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) c += x[i];
    c /= n;

    const Eigen::VectorXd xr = c + (c - x[n]);
    const double fr = f(xr);
    if (fr < fx[0]) {
      const Eigen::VectorXd xe = c + 2.0 * (c - x[n]);
      const double fe = f(xe);
      if (fe < fr) {
        x[n] = xe;
        fx[n] = fe;
      } else {
        x[n] = xr;
        fx[n] = fr;
      }
    } else if (fr < fx[n - 1]) {
      x[n] = xr;
      fx[n] = fr;
    } else {
      if (fr < fx[n]) {
        const Eigen::VectorXd xc = c + 0.5 * (xr - c);
        const double fc = f(xc);
        if (fc <= fr) {
          x[n] = xc;
          fx[n] = fc;
          continue;
        }
      } else {
        const Eigen::VectorXd xc = c - 0.5 * (c - x[n]);
        const double fc = f(xc);
        if (fc < fx[n]) {
          x[n] = xc;
          fx[n] = fc;
          continue;
        }
      }
      for (int i = 1; i <= n; ++i) {
        x[i] = x[0] + 0.5 * (x[i] - x[0]);
        fx[i] = f(x[i]);
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fx[i] < fx[best]) best = i;
  if (fmin) *fmin = fx[best];
  return x[best];
}

double marginal_loglik_2re(const std::vector<ScreenStudyCounts>& studies,
                           const Eigen::VectorXd& params, int nodes) {
  if (params.size() != 4) throw std::invalid_argument("2-RE model takes 4 parameters");
  const double b0 = params(0), b1 = params(1);
  const double sig0 = clamp_sigma(params(2)), sig1 = clamp_sigma(params(3));
  const double v0 = sig0 * sig0, v1 = sig1 * sig1;
  const GhRule gh = gauss_hermite(nodes);

  auto h = [&](const ScreenStudyCounts& st, double a0, double a1) {
    return CellLik::value(st.n0, st.s0, b0 + a0) +
           CellLik::value(st.n1, st.s1, b0 + b1 + a0 + a1) -
           0.5 * (a0 * a0 / v0 + a1 * a1 / v1) - 0.5 * (2.0 * kLog2PiQ) -
           std::log(sig0) - std::log(sig1);
  };

  double total = 0.0;
  std::vector<double> terms;
  terms.reserve(nodes * nodes);
  for (const auto& st : studies) {
    // Newton ascent to the mode of the log integrand (concave).
    double a0 = 0.0, a1 = 0.0;
    double hv = h(st, a0, a1);
    for (int it = 0; it < 60; ++it) {
      const double eta0 = b0 + a0, eta1 = b0 + b1 + a0 + a1;
      const double g0 = CellLik::grad(st.n0, st.s0, eta0) + CellLik::grad(st.n1, st.s1, eta1) -
                        a0 / v0;
      const double g1 = CellLik::grad(st.n1, st.s1, eta1) - a1 / v1;
      const double w0 = CellLik::curv(st.n0, eta0), w1 = CellLik::curv(st.n1, eta1);
      const double H00 = -(w0 + w1) - 1.0 / v0;
      const double H01 = -w1;
      const double H11 = -w1 - 1.0 / v1;
      const double det = H00 * H11 - H01 * H01;
      if (det <= 0.0) break;
      double d0 = -(H11 * g0 - H01 * g1) / det;
      double d1 = -(-H01 * g0 + H00 * g1) / det;
      double scale = 1.0;
      double cand_h = hv;
      double c0 = a0, c1 = a1;
      for (int half = 0; half < 30; ++half) {
        c0 = a0 + scale * d0;
        c1 = a1 + scale * d1;
        cand_h = h(st, c0, c1);
        if (cand_h >= hv - 1e-14) break;
        scale *= 0.5;
      }
      const double move = std::max(std::abs(c0 - a0), std::abs(c1 - a1));
      a0 = c0;
      a1 = c1;
      hv = cand_h;
      if (move < 1e-11) break;
    }

    const double eta0 = b0 + a0, eta1 = b0 + b1 + a0 + a1;
    const double w0 = CellLik::curv(st.n0, eta0), w1 = CellLik::curv(st.n1, eta1);
    // -H at the mode, Cholesky H = L L'.
    const double P00 = w0 + w1 + 1.0 / v0;
    const double P01 = w1;
    const double P11 = w1 + 1.0 / v1;
    const double L00 = std::sqrt(P00);
    const double L10 = P01 / L00;
    const double L11 = std::sqrt(std::max(P11 - L10 * L10, 1e-300));

    terms.clear();
    for (int i = 0; i < nodes; ++i) {
      for (int j = 0; j < nodes; ++j) {
        const double u0 = gh.nodes(i), u1 = gh.nodes(j);
        // a = mode + sqrt(2) L^{-T} u (back substitution)
        const double t1 = u1 / L11;
        const double t0 = (u0 - L10 * t1) / L00;
        const double q0 = a0 + std::sqrt(2.0) * t0;
        const double q1 = a1 + std::sqrt(2.0) * t1;
        terms.push_back(std::log(gh.weights(i) * gh.weights(j)) + h(st, q0, q1) + u0 * u0 +
                        u1 * u1);
      }
    }
    total += kLog2 - std::log(L00) - std::log(L11) + lse_accumulate(terms);
  }
  return total;
}

double marginal_loglik_1re(const std::vector<ScreenStudyCounts>& studies,
                           const Eigen::VectorXd& params, int nodes) {
  if (params.size() != 2) throw std::invalid_argument("1-RE model takes 2 parameters");
  const double b0 = params(0);
  const double sig0 = clamp_sigma(params(1));
  const double v0 = sig0 * sig0;
  const GhRule gh = gauss_hermite(nodes);

  auto h = [&](double n, double s, double a0) {
    return CellLik::value(n, s, b0 + a0) - 0.5 * a0 * a0 / v0 - 0.5 * kLog2PiQ -
           std::log(sig0);
  };

  double total = 0.0;
  std::vector<double> terms;
  terms.reserve(nodes);
  for (const auto& st : studies) {
    const double n = st.n0 + st.n1;
    const double s = st.s0 + st.s1;
    double a0 = 0.0;
    double hv = h(n, s, a0);
    for (int it = 0; it < 60; ++it) {
      const double eta = b0 + a0;
      const double g = CellLik::grad(n, s, eta) - a0 / v0;
      const double P = CellLik::curv(n, eta) + 1.0 / v0;
      double d = g / P;
      double scale = 1.0, cand = a0, cand_h = hv;
      for (int half = 0; half < 30; ++half) {
        cand = a0 + scale * d;
        cand_h = h(n, s, cand);
        if (cand_h >= hv - 1e-14) break;
        scale *= 0.5;
      }
      const double move = std::abs(cand - a0);
      a0 = cand;
      hv = cand_h;
      if (move < 1e-11) break;
    }
    const double P = CellLik::curv(n, b0 + a0) + 1.0 / v0;
    const double L00 = std::sqrt(P);

    terms.clear();
    for (int i = 0; i < nodes; ++i) {
      const double u = gh.nodes(i);
      const double q = a0 + std::sqrt(2.0) * u / L00;
      terms.push_back(std::log(gh.weights(i)) + h(n, s, q) + u * u);
    }
    total += 0.5 * kLog2 - std::log(L00) + lse_accumulate(terms);
  }
  return total;
}

}  // namespace pglmm
