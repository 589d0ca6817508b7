#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <json.hpp>
#include <string>
#include <vector>

#include "pglmm/mcecm.hpp"
#include "pglmm/sim.hpp"
#include "pglmm/tsp.hpp"
#include "pglmm/tuning.hpp"
#include "pglmm/types.hpp"

namespace pglmm {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // -1 when the header lacks the name.
  int column_index(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

// Rows grouped by study label in file order; an intercept column is
// injected at position 0 and every non-response, non-study column
// becomes a predictor. z_spec "" means all predictors plus intercept;
// otherwise a comma-separated list of predictor names (intercept always
// included).
MultiStudyDataset load_dataset(const std::string& path, const std::string& response_col,
                               const std::string& study_col, const std::string& z_spec,
                               const Family& family);

// Design matrix with the given columns; "(intercept)" yields ones.
Eigen::MatrixXd load_design(const std::string& path,
                            const std::vector<std::string>& column_names);

// First CSV column is the sample id, remaining columns are genes. A
// nonempty response_col names a 0/1 column excluded from the genes.
ExpressionStudy load_expression_csv(const std::string& path, const std::string& id,
                                    const std::string& response_col = "");

nlohmann::json theta_to_json(const Theta& theta);
Theta theta_from_json(const nlohmann::json& j);

nlohmann::json fit_to_json(const FitResult& fr, const Family& family,
                           const std::vector<std::string>& column_names, int total_n);

struct LoadedFit {
  Theta theta;
  Family family;
  std::vector<std::string> column_names;
};

LoadedFit fit_from_json(const nlohmann::json& j);

void write_icq_csv(const std::string& path, const IcqTable& table);
void write_predictions_csv(const std::string& path, const Eigen::VectorXd& values);
void write_strategy_csv(const std::string& path, const ReplicateTable& table);
void write_holdout_csv(const std::string& path, const std::vector<HoldoutStudyResult>& results);
void write_holdout_summary_csv(const std::string& path,
                               const std::vector<HoldoutStudyResult>& results);
void write_scores_csv(const std::string& path, const std::vector<RankedPair>& ranked);
void write_features_csv(const std::string& path, const TspPipelineResult& result);

// Key-value scenario file: N, K, sigma2, beta (comma list), p, R, seed,
// validation_size, mode (oracle|selection), reuse_alpha. '#' starts a
// comment.
Scenario load_scenario(const std::string& path);

// manifest.json in out_dir: command line, flag configuration, seed, tool
// version, input digests, UTC timestamp.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& config, std::uint64_t seed,
                    const std::vector<std::string>& input_files);

}  // namespace pglmm
