#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pglmm/mcecm.hpp"
#include "pglmm/tuning.hpp"
#include "pglmm/types.hpp"

namespace pglmm {

struct Scenario {
  int N = 500;
  int K = 5;
  double sigma2 = 1.0;
  Eigen::VectorXd beta_star;  // (intercept, slopes...) of the generator
  int p = 2;                  // candidate predictor count in the fitted models
  int validation_size = 100;
  int R = 20;
  std::uint64_t seed = 0;
  bool oracle = true;
  bool reuse_alpha = false;

  void validate() const;
};

// Study sizes: round(N/3) to study 1, remainder split as evenly as
// possible with earlier studies taking the extra unit.
std::vector<int> study_sizes(int N, int K);

struct GeneratedData {
  MultiStudyDataset train;
  StudyData validation;
};

GeneratedData gen_scenario(const Scenario& sc, int replicate);

enum class Strategy { IND, GLM, GLMM };

std::string strategy_name(Strategy s);

struct StrategyMetrics {
  Strategy strategy = Strategy::GLMM;
  Eigen::VectorXd mean_coef;  // oracle-column coefficient estimates
  double pe_med = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  bool tp_fp_defined = false;
  int excluded_studies = 0;
};

struct StrategySettings {
  int glm_path_points = 25;
  double glm_min_ratio = 0.05;
  int grid_n1 = 6;
  int grid_n2 = 4;
  double grid_min_ratio = 0.05;
  double anchor_ratio = 0.01;
  FitConfig glmm;  // lambda/structure fields are managed per run
  int threads = 1;
};

StrategyMetrics run_strategy(Strategy strategy, const Scenario& sc, const GeneratedData& data,
                             const StrategySettings& settings);

struct ReplicateTable {
  Scenario scenario;
  std::vector<StrategyMetrics> means;  // one per strategy, averaged over replicates
  int failures = 0;
};

ReplicateTable replicate_table(const Scenario& sc, const std::vector<Strategy>& strategies,
                               const StrategySettings& settings);

struct HoldoutSettings {
  double lambda1 = 0.0;  // 0 means anchor_ratio * lambda_max per split
  double lambda2 = 0.0;
  double anchor_ratio = 0.01;
  int glm_path_points = 25;
  double glm_min_ratio = 0.05;
  FitConfig glmm;
};

struct HoldoutStudyResult {
  std::string held_out;
  Eigen::VectorXd err_glmm;
  Eigen::VectorXd err_glm_merged;
  Eigen::VectorXd err_glm_per_study;
};

// Hold-one-study-out external validation: train on the K-1 remaining
// studies, score absolute errors on the held-out study. The per-study
// strategy averages the K-1 fitted models' predicted probabilities.
std::vector<HoldoutStudyResult> holdout_eval(const MultiStudyDataset& data,
                                             const HoldoutSettings& settings);

double median(Eigen::VectorXd v);

}  // namespace pglmm
