#pragma once

#include <vector>

#include "pglmm/mcecm.hpp"
#include "pglmm/types.hpp"

namespace pglmm {

struct TuningGrid {
  std::vector<double> lambda1;  // descending
  std::vector<double> lambda2;  // descending
  double anchor_lambda1 = 0.0;
  double anchor_lambda2 = 0.0;

  void validate() const;
};

// Dead-zone bound at the all-zero model: largest fixed-effect score
// magnitude on the merged data, shared by both grid axes.
double mcecm_lambda_max(const MultiStudyDataset& data,
                        const std::vector<int>& unpenalized_beta = {0});

TuningGrid default_grid(const MultiStudyDataset& data, int n1 = 8, int n2 = 8,
                        double min_ratio = 0.05, double anchor_ratio = 0.01);

// Count of nonzero parameters: beta entries, gamma entries, plus the
// gaussian dispersion.
int theta_dim(const Theta& theta, const Family& family);

// ICQ(lambda) = 2(Q1 + Q2) + dim(theta) log N, with Q1 of theta on the
// anchor fit's posterior draws and Q2 the anchor draws' prior term.
double icq(const MultiStudyDataset& data, const Theta& theta,
           const std::vector<Eigen::MatrixXd>& anchor_draws);

struct IcqRow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double icq = 0.0;
  int dim = 0;
  int s1_size = 0;
  int s2_size = 0;
  bool converged = false;
  bool completed = false;
};

struct IcqTable {
  std::vector<IcqRow> rows;
  int best_index = -1;
};

struct GridSearchResult {
  FitResult best;
  IcqTable table;
};

// Fits the anchor first and reuses its draws to score every grid point.
// Within each lambda2 row, fits run at descending lambda1 and warm-start
// from the previous solution; the whole search is sequential and
// deterministic.
GridSearchResult grid_search(const MultiStudyDataset& data, const TuningGrid& grid,
                             const FitConfig& base_config);

}  // namespace pglmm
