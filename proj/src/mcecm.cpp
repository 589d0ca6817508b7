#include "pglmm/mcecm.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pglmm/rng.hpp"

namespace pglmm {

namespace {

constexpr double kLog2PiEm = 1.8378770664093454836;

void for_each_study(int K, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || K <= 1) {
    for (int k = 0; k < K; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  const int workers = std::min(threads, K);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int k = next.fetch_add(1); k < K; k = next.fetch_add(1)) fn(k);
    });
  for (auto& t : pool) t.join();
}

bool gamma_all_zero(const std::vector<Eigen::VectorXd>& gamma) {
  for (const auto& g : gamma)
    if (g.norm() != 0.0) return false;
  return true;
}

// Per-draw Q1 contributions of one study: c_l = -sum_i log f(y_i|eta_il).
Eigen::VectorXd study_draw_nll(const StudyData& study, const Family& family,
                               const Theta& theta, const Eigen::MatrixXd& draws) {
  const Eigen::VectorXd eta_fixed = study.X * theta.beta;
  const Eigen::MatrixXd W = study.Z() * theta.Gamma();
  const int L = static_cast<int>(draws.rows());
  Eigen::VectorXd out(L);
  Eigen::VectorXd eta(study.n());
  for (int l = 0; l < L; ++l) {
    eta = eta_fixed + W * draws.row(l).transpose();
    double nll = 0.0;
    for (int i = 0; i < study.n(); ++i)
      nll -= log_density(study.y(i), eta(i), family, theta.tau);
    out(l) = nll;
  }
  return out;
}

double lag1_inflation(const Eigen::VectorXd& x) {
  const int L = static_cast<int>(x.size());
  if (L < 3) return 1.0;
  const double mean = x.mean();
  double num = 0.0, den = 0.0;
  for (int l = 0; l < L; ++l) {
    const double d = x(l) - mean;
    den += d * d;
    if (l + 1 < L) num += d * (x(l + 1) - mean);
  }
  if (den <= 0.0) return 1.0;
  const double rho = std::clamp(num / den, 0.0, 0.99);
  return (1.0 + rho) / (1.0 - rho);
}

}  // namespace

int draw_schedule(int em_iter, int l0, int cap) {
  if (em_iter < 1) throw std::invalid_argument("EM iteration index is 1-based");
  const double grow = std::ceil(std::pow(1.2, em_iter - 1));
  const double l = std::min(static_cast<double>(cap), l0 * grow);
  return static_cast<int>(l);
}

std::pair<double, double> q_on_draws(const MultiStudyDataset& data, const Theta& theta,
                                     const std::vector<Eigen::MatrixXd>& draws) {
  if (static_cast<int>(draws.size()) != data.K())
    throw std::invalid_argument("one draw matrix per study required");
  const int L = static_cast<int>(draws.front().rows());
  double q1 = 0.0, q2 = 0.0;
  for (int k = 0; k < data.K(); ++k) {
    if (draws[k].rows() != L) throw std::invalid_argument("draw counts differ across studies");
    q1 += study_draw_nll(data.studies[k], data.family, theta, draws[k]).sum();
    for (int l = 0; l < L; ++l)
      q2 -= log_normal_prior(draws[k].row(l).transpose());
  }
  return {q1 / L, q2 / L};
}

EStepResult estep(const MultiStudyDataset& data, const Theta& theta,
                  const SamplerConfig& config, int threads,
                  const std::vector<Eigen::VectorXd>& inits,
                  const std::vector<std::uint64_t>& seeds) {
  const int K = data.K();
  EStepResult res;
  res.draws.resize(K);
  res.diag.resize(K);
  res.final_states.resize(K);

  std::vector<double> q1_parts(K), q2_parts(K), var_parts(K);
  for_each_study(K, threads, [&](int k) {
    SamplerConfig cfg = config;
    if (!seeds.empty()) cfg.seed = seeds[k];
    const Eigen::VectorXd init = inits.empty() ? Eigen::VectorXd() : inits[k];
    SamplerResult s = sample_posterior(data.studies[k], data.family, theta, cfg, init);
    const Eigen::VectorXd c = study_draw_nll(data.studies[k], data.family, theta, s.draws);
    const int L = static_cast<int>(c.size());
    q1_parts[k] = c.mean();
    double q2k = 0.0;
    for (int l = 0; l < L; ++l) q2k -= log_normal_prior(s.draws.row(l).transpose());
    q2_parts[k] = q2k / L;
    double var = 0.0;
    if (L > 1) {
      const double m = c.mean();
      var = (c.array() - m).square().sum() / (L - 1.0);
      var *= lag1_inflation(c) / L;
    }
    var_parts[k] = var;
    res.draws[k] = std::move(s.draws);
    res.diag[k] = std::move(s.diag);
    res.final_states[k] = std::move(s.final_state);
  });

  for (int k = 0; k < K; ++k) {
    res.q1 += q1_parts[k];
    res.q2 += q2_parts[k];
    res.q1_mcse += var_parts[k];
  }
  res.q1_mcse = std::sqrt(res.q1_mcse);
  return res;
}

AugmentedDesign augment_all(const MultiStudyDataset& data,
                            const std::vector<Eigen::MatrixXd>& draws, CovStructure structure) {
  if (static_cast<int>(draws.size()) != data.K())
    throw std::invalid_argument("one draw matrix per study required");
  const int L = static_cast<int>(draws.front().rows());
  const int d = gamma_dim(data.q(), structure);

  AugmentedDesign all;
  all.Xrep.resize(static_cast<Eigen::Index>(data.total_n()) * L, data.p());
  all.Zt.resize(all.Xrep.rows(), d);
  all.yrep.resize(all.Xrep.rows());

  Eigen::Index at = 0;
  for (int k = 0; k < data.K(); ++k) {
    AugmentedDesign one = augment_design(data.studies[k], draws[k], structure);
    all.Xrep.middleRows(at, one.Xrep.rows()) = one.Xrep;
    all.Zt.middleRows(at, one.Zt.rows()) = one.Zt;
    all.yrep.segment(at, one.yrep.size()) = one.yrep;
    at += one.Xrep.rows();
  }
  return all;
}

double q1_value(const AugmentedDesign& aug, int L, const Family& family,
                const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma_flat, double tau) {
  Eigen::VectorXd eta = aug.Xrep * beta + aug.Zt * gamma_flat;
  double q1 = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    q1 -= log_density(aug.yrep(i), eta(i), family, tau);
  return q1 / L;
}

Eigen::VectorXd q1_gradient(const AugmentedDesign& aug, int L, const Family& family,
                            const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma_flat,
                            double tau) {
  Eigen::VectorXd eta = aug.Xrep * beta + aug.Zt * gamma_flat;
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    mu(i) = family.kind == FamilyKind::Bernoulli ? invlogit(eta(i)) : eta(i);
  Eigen::VectorXd resid = mu - aug.yrep;
  if (family.kind == FamilyKind::Gaussian) resid /= tau;
  Eigen::VectorXd grad(beta.size() + gamma_flat.size());
  grad.head(beta.size()) = aug.Xrep.transpose() * resid / L;
  grad.tail(gamma_flat.size()) = aug.Zt.transpose() * resid / L;
  return grad;
}

Eigen::VectorXd mstep_beta(const AugmentedDesign& aug, int L, const Family& family,
                           const Eigen::VectorXd& gamma_flat, double tau,
                           const PenaltySpec& pen, const std::vector<int>& unpenalized,
                           const Eigen::VectorXd& warm, const CdOptions& opts) {
  const Eigen::Index p = aug.Xrep.cols();
  std::vector<GroupSpec> groups(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    groups[j] = {static_cast<int>(j), 1, true};
    for (int u : unpenalized)
      if (u == j) groups[j].penalized = false;
  }
  const Eigen::VectorXd offset = aug.Zt * gamma_flat;
  Eigen::VectorXd start = warm.size() == p ? warm : Eigen::VectorXd::Zero(p);
  CdResult cd = solve_grouped_cd(aug.Xrep, aug.yrep, offset, family, tau, 1.0 / L, groups, pen,
                                 start, opts);
  if (!cd.converged)
    std::cerr << "warning: fixed-effect coordinate descent hit its iteration cap\n";
  return cd.coef;
}

GammaStep mstep_gamma(const AugmentedDesign& aug, int L, const Family& family,
                      const Eigen::VectorXd& beta, double tau, const PenaltySpec& pen,
                      CovStructure structure, int q, bool penalize_intercept_group,
                      const std::vector<Eigen::VectorXd>& warm, const CdOptions& opts) {
  std::vector<GroupSpec> groups(q);
  for (int t = 0; t < q; ++t) {
    groups[t] = {group_offset(t, structure), group_size(t, structure), true};
    if (t == 0 && !penalize_intercept_group) groups[t].penalized = false;
  }
  const Eigen::VectorXd offset = aug.Xrep * beta;

  Eigen::VectorXd start = Eigen::VectorXd::Zero(gamma_dim(q, structure));
  if (static_cast<int>(warm.size()) == q)
    for (int t = 0; t < q; ++t)
      start.segment(groups[t].offset, groups[t].size) = warm[t];

  CdResult cd = solve_grouped_cd(aug.Zt, aug.yrep, offset, family, tau, 1.0 / L, groups, pen,
                                 start, opts);
  if (!cd.converged)
    std::cerr << "warning: variance-component coordinate descent hit its iteration cap\n";

  GammaStep step;
  step.gamma = Theta::gamma_from_flat(cd.coef, q, structure);
  step.flipped.assign(q, false);
  if (structure == CovStructure::Diagonal) {
    for (int t = 0; t < q; ++t)
      if (step.gamma[t](0) < 0.0) {
        step.gamma[t](0) = -step.gamma[t](0);
        step.flipped[t] = true;
      }
  }
  return step;
}

double mstep_tau(const AugmentedDesign& aug, int L, const Family& family,
                 const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma_flat,
                 double tau_init) {
  if (family.kind == FamilyKind::Bernoulli) return 1.0;
  (void)tau_init;
  const Eigen::VectorXd resid = aug.yrep - aug.Xrep * beta - aug.Zt * gamma_flat;
  const double S = resid.squaredNorm() / L;
  const double n = static_cast<double>(aug.yrep.size()) / L;

  double tau = S / n;
  if (tau < 1e-8) {
    std::cerr << "warning: residual variance collapsed; flooring tau at 1e-8\n";
    tau = 1e-8;
  }
  return tau;
}

FitResult fit(const MultiStudyDataset& data, const FitConfig& config) {
  data.validate();
  const Family family = data.family;
  const int q = data.q();
  const int K = data.K();
  if (config.structure == CovStructure::FullLowerTriangular && q > 10)
    throw std::invalid_argument("full covariance structure supported only for q <= 10");
  if (config.epsilon <= 0.0 || config.max_em_iter < 1)
    throw std::invalid_argument("fit config out of range");

  Theta theta;
  if (config.warm_start) {
    theta = *config.warm_start;
    theta.validate();
    if (theta.p() != data.p() || theta.q() != q || theta.structure != config.structure)
      throw std::invalid_argument("warm start shape does not match data/config");
  } else {
    const Eigen::MatrixXd Xm = data.merged_X();
    const Eigen::VectorXd ym = data.merged_y();
    GlmFit init = penalized_glm(Xm, ym, family, config.pen1(), config.unpenalized_beta, {},
                                config.cd);
    theta = Theta::make(init.beta, q, config.structure, config.gamma_init);
    theta.tau = 1.0;
    if (family.kind == FamilyKind::Gaussian) {
      const double rss = (ym - Xm * init.beta).squaredNorm();
      theta.tau = std::max(rss / Xm.rows(), 1e-4);
    }
  }

  FitResult res;
  std::vector<Eigen::VectorXd> states(K, Eigen::VectorXd::Zero(q));
  int div_streak = 0;
  int streak = 0;

  for (int s = 1; s <= config.max_em_iter; ++s) {
    res.iterations = s;
    const int L = draw_schedule(s, config.sampler.n_draws, config.draws_cap);

    EStepResult e;
    if (gamma_all_zero(theta.gamma)) {
      e.draws.assign(K, Eigen::MatrixXd::Zero(1, q));
      e.diag.assign(K, SamplerDiagnostics{Eigen::VectorXd::Zero(q), 1});
      e.final_states = states;
      auto [q1, q2] = q_on_draws(data, theta, e.draws);
      e.q1 = q1;
      e.q2 = q2;
    } else {
      SamplerConfig cfg = config.sampler;
      cfg.n_draws = L;
      std::vector<std::uint64_t> seeds(K);
      for (int k = 0; k < K; ++k)
        seeds[k] = chain_seed(config.sampler.seed, data.studies[k].id, s);
      e = estep(data, theta, cfg, config.threads, states, seeds);
      states = e.final_states;
    }
    res.q1_trace.push_back(e.q1);
    res.q2_trace.push_back(e.q2);

    if (s >= 4 && e.q1 > res.q1_trace[s - 2] + 3.0 * e.q1_mcse) {
      if (++div_streak >= 5) {
        std::ostringstream msg;
        msg << "fit diverged: Q1 increased for 5 consecutive iterations (last="
            << e.q1 << ", mcse=" << e.q1_mcse << ")";
        throw std::runtime_error(msg.str());
      }
    } else {
      div_streak = 0;
    }

    const Theta prev = theta;
    const int actual_L = static_cast<int>(e.draws.front().rows());
    AugmentedDesign aug = augment_all(data, e.draws, config.structure);

    theta.beta = mstep_beta(aug, actual_L, family, prev.gamma_flat(), theta.tau, config.pen1(),
                            config.unpenalized_beta, prev.beta, config.cd);
    GammaStep gs = mstep_gamma(aug, actual_L, family, theta.beta, theta.tau, config.pen2(),
                               config.structure, q, config.penalize_random_intercept,
                               prev.gamma, config.cd);
    theta.gamma = gs.gamma;

    if (config.structure == CovStructure::Diagonal) {
      for (int t = 0; t < q; ++t)
        if (gs.flipped[t]) {
          aug.Zt.col(group_offset(t, config.structure)) *= -1.0;
          for (int k = 0; k < K; ++k) states[k](t) = -states[k](t);
        }
    }
    theta.tau = mstep_tau(aug, actual_L, family, theta.beta, theta.gamma_flat(), theta.tau);

    if (config.structure == CovStructure::FullLowerTriangular) {
      for (int t = 0; t < q; ++t) {
        if (theta.gamma[t](t) < 0.0) {
          for (int u = t; u < q; ++u) theta.gamma[u](t) = -theta.gamma[u](t);
          for (int k = 0; k < K; ++k) states[k](t) = -states[k](t);
        }
      }
    }

    double delta = std::abs(theta.tau - prev.tau);
    delta = std::max(delta, (theta.beta - prev.beta).lpNorm<Eigen::Infinity>());
    for (int t = 0; t < q; ++t)
      delta = std::max(delta, (theta.gamma[t] - prev.gamma[t]).lpNorm<Eigen::Infinity>());

    if (delta < config.epsilon) {
      if (++streak >= config.convergence_window) {
        res.converged = true;
        break;
      }
    } else {
      streak = 0;
    }
  }

  const int s_final = res.iterations + 1;
  const int L_final = draw_schedule(s_final, config.sampler.n_draws, config.draws_cap);
  if (gamma_all_zero(theta.gamma)) {
    res.final_draws.assign(K, Eigen::MatrixXd::Zero(1, q));
    res.diagnostics.assign(K, SamplerDiagnostics{Eigen::VectorXd::Zero(q), 1});
    auto [q1, q2] = q_on_draws(data, theta, res.final_draws);
    res.q1_final = q1;
    res.q2_final = q2;
  } else {
    SamplerConfig cfg = config.sampler;
    cfg.n_draws = L_final;
    std::vector<std::uint64_t> seeds(K);
    for (int k = 0; k < K; ++k)
      seeds[k] = chain_seed(config.sampler.seed, data.studies[k].id, s_final);
    EStepResult e = estep(data, theta, cfg, config.threads, states, seeds);
    res.final_draws = std::move(e.draws);
    res.diagnostics = std::move(e.diag);
    res.q1_final = e.q1;
    res.q2_final = e.q2;
  }

  res.theta = theta;
  res.selected = selected_sets(theta);
  return res;
}

Eigen::VectorXd predict(const Theta& theta, const Family& family, const Eigen::MatrixXd& X_new) {
  if (X_new.cols() != theta.p())
    throw std::invalid_argument("prediction design has wrong column count");
  Eigen::VectorXd eta = X_new * theta.beta;
  if (family.kind == FamilyKind::Gaussian) return eta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = invlogit(eta(i));
  return eta;
}

}  // namespace pglmm
