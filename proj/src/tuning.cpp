#include "pglmm/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pglmm {

void TuningGrid::validate() const {
  if (lambda1.empty() || lambda2.empty()) throw std::invalid_argument("tuning grid is empty");
  for (const auto* axis : {&lambda1, &lambda2}) {
    for (std::size_t i = 0; i < axis->size(); ++i) {
      if ((*axis)[i] <= 0.0) throw std::invalid_argument("grid lambdas must be positive");
      if (i > 0 && (*axis)[i] >= (*axis)[i - 1])
        throw std::invalid_argument("grid lambdas must be strictly descending");
    }
  }
  const double min1 = lambda1.back(), min2 = lambda2.back();
  if (anchor_lambda1 > min1 || anchor_lambda2 > min2)
    throw std::invalid_argument("anchor lambdas must not exceed the grid minima");
}

double mcecm_lambda_max(const MultiStudyDataset& data,
                        const std::vector<int>& unpenalized_beta) {
  return glm_lambda_max(data.merged_X(), data.merged_y(), data.family, unpenalized_beta);
}

TuningGrid default_grid(const MultiStudyDataset& data, int n1, int n2, double min_ratio,
                        double anchor_ratio) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("grid sizes must be positive");
  if (!(min_ratio > 0.0 && min_ratio < 1.0) || !(anchor_ratio > 0.0))
    throw std::invalid_argument("grid ratios out of range");
  const double lam_max = mcecm_lambda_max(data);

  TuningGrid grid;
  auto fill = [&](std::vector<double>& axis, int n) {
    axis.resize(n);
    for (int i = 0; i < n; ++i) {
      const double f = n == 1 ? 1.0 : std::exp(std::log(min_ratio) * i / (n - 1.0));
      axis[i] = lam_max * f;
    }
  };
  fill(grid.lambda1, n1);
  fill(grid.lambda2, n2);
  grid.anchor_lambda1 = anchor_ratio * lam_max;
  grid.anchor_lambda2 = anchor_ratio * lam_max;
  return grid;
}

int theta_dim(const Theta& theta, const Family& family) {
  int dim = 0;
  for (int j = 0; j < theta.p(); ++j)
    if (theta.beta(j) != 0.0) ++dim;
  for (const auto& g : theta.gamma)
    for (Eigen::Index u = 0; u < g.size(); ++u)
      if (g(u) != 0.0) ++dim;
  if (family.kind == FamilyKind::Gaussian) ++dim;
  return dim;
}

double icq(const MultiStudyDataset& data, const Theta& theta,
           const std::vector<Eigen::MatrixXd>& anchor_draws) {
  if (anchor_draws.empty()) throw std::invalid_argument("anchor draws required for ICQ");
  auto [q1, q2] = q_on_draws(data, theta, anchor_draws);
  const double cn = theta_dim(theta, data.family) *
                    std::log(static_cast<double>(data.total_n()));
  return 2.0 * (q1 + q2) + cn;
}

GridSearchResult grid_search(const MultiStudyDataset& data, const TuningGrid& grid,
                             const FitConfig& base_config) {
  grid.validate();

  FitConfig anchor_cfg = base_config;
  anchor_cfg.lambda1 = grid.anchor_lambda1;
  anchor_cfg.lambda2 = grid.anchor_lambda2;
  anchor_cfg.warm_start.reset();
  FitResult anchor = fit(data, anchor_cfg);
  const std::vector<Eigen::MatrixXd>& anchor_draws = anchor.final_draws;

  GridSearchResult out;
  double best_icq = std::numeric_limits<double>::infinity();
  bool best_converged = false;
  std::vector<std::string> failures;

  for (double l2 : grid.lambda2) {
    std::optional<Theta> row_warm = anchor.theta;
    for (double l1 : grid.lambda1) {
      FitConfig cfg = base_config;
      cfg.lambda1 = l1;
      cfg.lambda2 = l2;
      cfg.warm_start = row_warm;

      IcqRow row;
      row.lambda1 = l1;
      row.lambda2 = l2;
      row.icq = std::numeric_limits<double>::quiet_NaN();
      try {
        FitResult fr = fit(data, cfg);
        row.completed = true;
        row.converged = fr.converged;
        row.dim = theta_dim(fr.theta, data.family);
        row.s1_size = static_cast<int>(fr.selected.s1.size());
        row.s2_size = static_cast<int>(fr.selected.s2.size());
        row.icq = icq(data, fr.theta, anchor_draws);
        row_warm = fr.theta;

        const bool better = best_converged
                                ? (fr.converged && row.icq < best_icq)
                                : (fr.converged || row.icq < best_icq);
        if (better) {
          best_icq = row.icq;
          best_converged = fr.converged;
          out.best = std::move(fr);
          out.table.best_index = static_cast<int>(out.table.rows.size());
        }
      } catch (const std::exception& ex) {
        std::ostringstream msg;
        msg << "lambda1=" << l1 << " lambda2=" << l2 << ": " << ex.what();
        failures.push_back(msg.str());
        row_warm = anchor.theta;
      }
      out.table.rows.push_back(row);
    }
  }

  if (out.table.best_index < 0) {
    std::ostringstream msg;
    msg << "all grid fits failed:";
    for (const auto& f : failures) msg << "\n  " << f;
    throw std::runtime_error(msg.str());
  }
  return out;
}

}  // namespace pglmm
