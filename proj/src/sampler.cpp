#include "pglmm/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "pglmm/model.hpp"
#include "pglmm/rng.hpp"

namespace pglmm {

namespace {

double chain_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta,
                    const Family& family, double tau) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) ll += log_density(y(i), eta(i), family, tau);
  return ll;
}

}  // namespace

SamplerResult sample_posterior(const StudyData& study, const Family& family,
                               const Theta& theta, const SamplerConfig& config,
                               const Eigen::VectorXd& init) {
  const int q = theta.q();
  if (study.q() != q) throw std::invalid_argument("theta random-effect count does not match study");
  if (config.n_draws < 1 || config.burnin < 0 || config.thin < 1)
    throw std::invalid_argument("sampler config out of range");

  const Eigen::VectorXd eta_fixed = study.X * theta.beta;
  const Eigen::MatrixXd W = study.Z() * theta.Gamma();  // col j = d eta / d alpha_j

  Eigen::VectorXd alpha = init.size() == q ? init : Eigen::VectorXd::Zero(q);
  Eigen::VectorXd eta = eta_fixed + W * alpha;
  Eigen::VectorXd eta_cand(eta.size());
  double ll = chain_loglik(study.y, eta, family, theta.tau);
  if (!std::isfinite(ll))
    throw std::runtime_error("sampler initialization has non-finite likelihood");

  const double s = config.proposal_scale;
  if (!(s > 0.0)) throw std::invalid_argument("proposal scale must be positive");
  // Prior/proposal terms cancel at scale 1; this factor carries the rest.
  const double shape = 0.5 * (1.0 - 1.0 / (s * s));

  Rng rng(config.seed);
  const int total_sweeps = config.burnin + config.n_draws * config.thin;

  SamplerResult out;
  out.draws.resize(config.n_draws, q);
  Eigen::VectorXd accepted = Eigen::VectorXd::Zero(q);

  int kept = 0;
  for (int sweep = 1; sweep <= total_sweeps; ++sweep) {
    for (int j = 0; j < q; ++j) {
      const double cand = s * rng.normal();
      const double old = alpha(j);
      eta_cand = eta + W.col(j) * (cand - old);
      const double ll_cand = chain_loglik(study.y, eta_cand, family, theta.tau);
      const double log_ratio = ll_cand - ll + shape * (old * old - cand * cand);
      if (std::log(rng.uniform()) < log_ratio) {
        alpha(j) = cand;
        eta.swap(eta_cand);
        ll = ll_cand;
        accepted(j) += 1.0;
      }
    }
    if (sweep > config.burnin && (sweep - config.burnin) % config.thin == 0)
      out.draws.row(kept++) = alpha.transpose();
  }

  out.diag.acceptance_rate = accepted / static_cast<double>(total_sweeps);
  out.diag.chain_length = config.n_draws;
  out.final_state = alpha;
  return out;
}

}  // namespace pglmm
