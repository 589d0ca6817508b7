#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pglmm {

struct ExpressionStudy {
  std::string id;
  std::vector<std::string> genes;
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd values;  // samples x genes
  Eigen::VectorXd response;
  bool has_response = false;

  int n() const { return static_cast<int>(values.rows()); }
  void validate() const;
};

struct GenePair {
  std::string a;
  std::string b;
  std::string name() const { return a + "_" + b; }
};

// Genes present in every study, sorted.
std::vector<std::string> common_genes(const std::vector<ExpressionStudy>& studies);

// All G(G-1)/2 pairs of the given genes in lexicographic order, each
// pair oriented with the lexicographically smaller gene first.
std::vector<GenePair> enumerate_pairs(const std::vector<std::string>& genes);

// Indicator matrix: entry 1 iff expression of pair.a strictly exceeds
// pair.b in that sample; ties give 0.
Eigen::MatrixXd tsp_transform(const ExpressionStudy& study, const std::vector<GenePair>& pairs);

struct ScreenResult {
  double score = 0.0;
  bool informative = true;
};

// Maximized marginal log likelihood of the univariate random-intercept
// random-slope logistic model for one binary feature column. A column
// constant across all rows falls back to the intercept-only model and is
// flagged non-informative.
ScreenResult screen_univariate(const Eigen::VectorXd& column, const Eigen::VectorXd& y,
                               const std::vector<int>& study_of_row, int K);

struct RankedPair {
  GenePair pair;
  double score = 0.0;
  bool informative = true;
  bool kept = false;
};

// Sorts by score descending (ties by pair name) and greedily keeps pairs
// whose genes are disjoint from every already-kept pair.
std::vector<RankedPair> dedup_ranked(std::vector<RankedPair> ranked);

// First min(m, kept) kept pairs; sets truncated when fewer than m exist.
std::vector<RankedPair> select_top(const std::vector<RankedPair>& deduped, int m,
                                   bool* truncated = nullptr);

struct TspPipelineResult {
  std::vector<RankedPair> scored;       // every pair, ranked, with kept flags
  std::vector<GenePair> selected;       // final feature set
  Eigen::MatrixXd features;             // merged samples x selected pairs
  Eigen::VectorXd y;
  std::vector<int> study_of_row;
  std::vector<std::string> study_ids;
  bool truncated = false;
};

// Full screening pipeline: common genes, enumeration, per-study
// transform, univariate screening, ranked dedup, top-m selection.
TspPipelineResult tsp_screen_pipeline(const std::vector<ExpressionStudy>& studies, int top_m,
                                      int threads = 1);

}  // namespace pglmm
