#include "pglmm/io.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pglmm/rng.hpp"
#include "pglmm/version.hpp"

namespace pglmm {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, int line_no, const std::string& column) {
  const std::string t = trim(cell);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (t.empty() || pos != t.size())
    throw std::runtime_error("line " + std::to_string(line_no) + ", column '" + column +
                             "': cannot parse '" + cell + "' as a number");
  return v;
}

std::string fmt(double x, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

std::vector<double> to_doubles(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_doubles(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int CsvTable::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  table.columns = split_line(line, ',');
  for (auto& c : table.columns) c = trim(c);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, ',');
    if (cells.size() != table.columns.size())
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(table.columns.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

nlohmann::json read_json_file(const std::string& path) {
  return nlohmann::json::parse(read_text_file(path));
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

MultiStudyDataset load_dataset(const std::string& path, const std::string& response_col,
                               const std::string& study_col, const std::string& z_spec,
                               const Family& family) {
  const CsvTable table = read_csv(path);
  const int yi = table.column_index(response_col);
  if (yi < 0) throw std::runtime_error(path + ": no response column '" + response_col + "'");
  const int si = table.column_index(study_col);
  if (si < 0) throw std::runtime_error(path + ": no study column '" + study_col + "'");

  std::vector<int> pred_cols;
  std::vector<std::string> names{"(intercept)"};
  for (int j = 0; j < static_cast<int>(table.columns.size()); ++j) {
    if (j == yi || j == si) continue;
    pred_cols.push_back(j);
    names.push_back(table.columns[j]);
  }
  if (pred_cols.empty()) throw std::runtime_error(path + ": no predictor columns");

  std::vector<int> z_cols;
  if (trim(z_spec).empty()) {
    for (int j = 0; j <= static_cast<int>(pred_cols.size()); ++j) z_cols.push_back(j);
  } else {
    z_cols.push_back(0);
    for (const auto& tok : split_line(z_spec, ',')) {
      const std::string name = trim(tok);
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end() || it == names.begin())
        throw std::runtime_error("z-column '" + name + "' is not a predictor in '" + path + "'");
      z_cols.push_back(static_cast<int>(it - names.begin()));
    }
    std::sort(z_cols.begin(), z_cols.end());
    z_cols.erase(std::unique(z_cols.begin(), z_cols.end()), z_cols.end());
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<int>> rows_of;
  for (int i = 0; i < static_cast<int>(table.rows.size()); ++i) {
    const std::string label = trim(table.rows[i][si]);
    if (!rows_of.count(label)) order.push_back(label);
    rows_of[label].push_back(i);
  }

  MultiStudyDataset data;
  data.family = family;
  data.column_names = names;
  for (const auto& label : order) {
    const auto& rows = rows_of[label];
    if (rows.size() < 2)
      throw std::runtime_error(path + ": study '" + label + "' has a single row");
    StudyData s;
    s.id = label;
    s.z_cols = z_cols;
    s.X.resize(static_cast<int>(rows.size()), static_cast<int>(pred_cols.size()) + 1);
    s.y.resize(static_cast<int>(rows.size()));
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      const auto& cells = table.rows[rows[r]];
      const int line_no = rows[r] + 2;
      s.y(r) = parse_cell(cells[yi], line_no, response_col);
      s.X(r, 0) = 1.0;
      for (int j = 0; j < static_cast<int>(pred_cols.size()); ++j)
        s.X(r, j + 1) = parse_cell(cells[pred_cols[j]], line_no, table.columns[pred_cols[j]]);
    }
    data.studies.push_back(std::move(s));
  }
  data.validate();
  return data;
}

Eigen::MatrixXd load_design(const std::string& path,
                            const std::vector<std::string>& column_names) {
  const CsvTable table = read_csv(path);
  const int n = static_cast<int>(table.rows.size());
  Eigen::MatrixXd X(n, static_cast<int>(column_names.size()));
  for (int j = 0; j < static_cast<int>(column_names.size()); ++j) {
    if (column_names[j] == "(intercept)") {
      X.col(j).setOnes();
      continue;
    }
    const int c = table.column_index(column_names[j]);
    if (c < 0) throw std::runtime_error(path + ": no column '" + column_names[j] + "'");
    for (int i = 0; i < n; ++i)
      X(i, j) = parse_cell(table.rows[i][c], i + 2, column_names[j]);
  }
  return X;
}

ExpressionStudy load_expression_csv(const std::string& path, const std::string& id,
                                    const std::string& response_col) {
  const CsvTable table = read_csv(path);
  if (table.columns.size() < 2)
    throw std::runtime_error(path + ": expression file needs sample-id plus gene columns");
  ExpressionStudy study;
  study.id = id;
  int ri = -1;
  if (!response_col.empty()) {
    ri = table.column_index(response_col);
    if (ri < 1) throw std::runtime_error(path + ": no response column '" + response_col + "'");
  }
  std::vector<int> gene_cols;
  for (int j = 1; j < static_cast<int>(table.columns.size()); ++j) {
    if (j == ri) continue;
    gene_cols.push_back(j);
    study.genes.push_back(table.columns[j]);
  }
  const int n = static_cast<int>(table.rows.size());
  study.values.resize(n, static_cast<int>(gene_cols.size()));
  if (ri >= 0) {
    study.response.resize(n);
    study.has_response = true;
  }
  for (int i = 0; i < n; ++i) {
    study.sample_ids.push_back(trim(table.rows[i][0]));
    for (int j = 0; j < static_cast<int>(gene_cols.size()); ++j)
      study.values(i, j) =
          parse_cell(table.rows[i][gene_cols[j]], i + 2, study.genes[j]);
    if (ri >= 0) study.response(i) = parse_cell(table.rows[i][ri], i + 2, response_col);
  }
  study.validate();
  return study;
}

nlohmann::json theta_to_json(const Theta& theta) {
  nlohmann::json j;
  j["beta"] = to_doubles(theta.beta);
  j["structure"] = theta.structure == CovStructure::Diagonal ? "diagonal" : "full";
  j["tau"] = theta.tau;
  auto groups = nlohmann::json::array();
  for (const auto& g : theta.gamma) groups.push_back(to_doubles(g));
  j["gamma"] = groups;
  return j;
}

Theta theta_from_json(const nlohmann::json& j) {
  Theta theta;
  theta.beta = from_doubles(j.at("beta").get<std::vector<double>>());
  theta.structure = parse_structure(j.at("structure").get<std::string>());
  theta.tau = j.at("tau").get<double>();
  for (const auto& g : j.at("gamma"))
    theta.gamma.push_back(from_doubles(g.get<std::vector<double>>()));
  theta.validate();
  return theta;
}

nlohmann::json fit_to_json(const FitResult& fr, const Family& family,
                           const std::vector<std::string>& column_names, int total_n) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["family"] = family_name(family);
  j["column_names"] = column_names;
  j["theta"] = theta_to_json(fr.theta);
  j["selected"] = {{"s1", fr.selected.s1}, {"s2", fr.selected.s2}};
  j["icq_inputs"] = {{"q1", fr.q1_final},
                     {"q2", fr.q2_final},
                     {"dim", theta_dim(fr.theta, family)},
                     {"total_n", total_n}};
  auto acc = nlohmann::json::array();
  for (const auto& d : fr.diagnostics)
    acc.push_back(d.acceptance_rate.size() > 0 ? d.acceptance_rate.mean() : 0.0);
  j["diagnostics"] = {{"converged", fr.converged},
                      {"iterations", fr.iterations},
                      {"acceptance_rates", acc},
                      {"q1_trace", fr.q1_trace},
                      {"q2_trace", fr.q2_trace}};
  return j;
}

LoadedFit fit_from_json(const nlohmann::json& j) {
  LoadedFit out;
  out.theta = theta_from_json(j.at("theta"));
  out.family = parse_family(j.at("family").get<std::string>());
  out.column_names = j.at("column_names").get<std::vector<std::string>>();
  return out;
}

void write_icq_csv(const std::string& path, const IcqTable& table) {
  std::ostringstream out;
  out << "lambda1,lambda2,icq,dim,s1_size,s2_size,converged\n";
  for (const auto& r : table.rows)
    out << fmt(r.lambda1) << ',' << fmt(r.lambda2) << ',' << fmt(r.icq) << ',' << r.dim << ','
        << r.s1_size << ',' << r.s2_size << ',' << (r.converged ? 1 : 0) << '\n';
  write_text_file(path, out.str());
}

void write_predictions_csv(const std::string& path, const Eigen::VectorXd& values) {
  std::ostringstream out;
  out << "prediction\n";
  for (Eigen::Index i = 0; i < values.size(); ++i) out << fmt(values(i)) << '\n';
  write_text_file(path, out.str());
}

void write_strategy_csv(const std::string& path, const ReplicateTable& table) {
  const Scenario& sc = table.scenario;
  const int m = static_cast<int>(sc.beta_star.size()) - 1;
  auto metrics_of = [&](Strategy s) -> const StrategyMetrics* {
    for (const auto& mrow : table.means)
      if (mrow.strategy == s) return &mrow;
    return nullptr;
  };
  const StrategyMetrics* glmm = metrics_of(Strategy::GLMM);
  const StrategyMetrics* glm = metrics_of(Strategy::GLM);
  const StrategyMetrics* ind = metrics_of(Strategy::IND);

  std::ostringstream out;
  out << "N";
  if (!sc.oracle) out << ",p";
  out << ",K,sigma2";
  for (int j = 1; j <= m; ++j) out << ",beta" << j << "_GLMM";
  for (int j = 1; j <= m; ++j) out << ",beta" << j << "_GLM";
  if (!sc.oracle)
    out << ",TP_GLMM,FP_GLMM,TP_GLM,FP_GLM,TP_IND,FP_IND";
  out << ",PE_GLMM_med,PE_GLM_med,PE_IND_med\n";

  auto coef = [&](const StrategyMetrics* s, int j) {
    return s && s->mean_coef.size() > j ? fmt(s->mean_coef(j), "%.6g") : std::string("NA");
  };
  auto val = [&](const StrategyMetrics* s, double StrategyMetrics::* field) {
    return s ? fmt(s->*field, "%.6g") : std::string("NA");
  };

  out << sc.N;
  if (!sc.oracle) out << ',' << sc.p;
  out << ',' << sc.K << ',' << fmt(sc.sigma2, "%.6g");
  for (int j = 1; j <= m; ++j) out << ',' << coef(glmm, j);
  for (int j = 1; j <= m; ++j) out << ',' << coef(glm, j);
  if (!sc.oracle) {
    out << ',' << val(glmm, &StrategyMetrics::tp) << ',' << val(glmm, &StrategyMetrics::fp);
    out << ',' << val(glm, &StrategyMetrics::tp) << ',' << val(glm, &StrategyMetrics::fp);
    out << ',' << val(ind, &StrategyMetrics::tp) << ',' << val(ind, &StrategyMetrics::fp);
  }
  out << ',' << val(glmm, &StrategyMetrics::pe_med) << ',' << val(glm, &StrategyMetrics::pe_med)
      << ',' << val(ind, &StrategyMetrics::pe_med) << '\n';
  write_text_file(path, out.str());
}

void write_holdout_csv(const std::string& path,
                       const std::vector<HoldoutStudyResult>& results) {
  std::ostringstream out;
  out << "held_out,subject,err_glmm,err_glm_merged,err_glm_per_study\n";
  for (const auto& r : results)
    for (Eigen::Index i = 0; i < r.err_glmm.size(); ++i)
      out << r.held_out << ',' << i << ',' << fmt(r.err_glmm(i)) << ','
          << fmt(r.err_glm_merged(i)) << ',' << fmt(r.err_glm_per_study(i)) << '\n';
  write_text_file(path, out.str());
}

void write_holdout_summary_csv(const std::string& path,
                               const std::vector<HoldoutStudyResult>& results) {
  std::ostringstream out;
  out << "held_out,n,med_glmm,med_glm_merged,med_glm_per_study\n";
  for (const auto& r : results)
    out << r.held_out << ',' << r.err_glmm.size() << ',' << fmt(median(r.err_glmm), "%.6g")
        << ',' << fmt(median(r.err_glm_merged), "%.6g") << ','
        << fmt(median(r.err_glm_per_study), "%.6g") << '\n';
  write_text_file(path, out.str());
}

void write_scores_csv(const std::string& path, const std::vector<RankedPair>& ranked) {
  std::ostringstream out;
  out << "pair,score,kept,informative\n";
  for (const auto& r : ranked)
    out << r.pair.name() << ',' << fmt(r.score) << ',' << (r.kept ? 1 : 0) << ','
        << (r.informative ? 1 : 0) << '\n';
  write_text_file(path, out.str());
}

void write_features_csv(const std::string& path, const TspPipelineResult& result) {
  std::ostringstream out;
  out << "study";
  for (const auto& p : result.selected) out << ',' << p.name();
  if (result.y.size() > 0) out << ",response";
  out << '\n';
  for (Eigen::Index i = 0; i < result.features.rows(); ++i) {
    out << result.study_ids[result.study_of_row[i]];
    for (Eigen::Index j = 0; j < result.features.cols(); ++j)
      out << ',' << result.features(i, j);
    if (result.y.size() > 0) out << ',' << result.y(i);
    out << '\n';
  }
  write_text_file(path, out.str());
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Scenario sc;
  bool have_beta = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "N")
      sc.N = static_cast<int>(parse_cell(value, line_no, key));
    else if (key == "K")
      sc.K = static_cast<int>(parse_cell(value, line_no, key));
    else if (key == "sigma2")
      sc.sigma2 = parse_cell(value, line_no, key);
    else if (key == "p")
      sc.p = static_cast<int>(parse_cell(value, line_no, key));
    else if (key == "R")
      sc.R = static_cast<int>(parse_cell(value, line_no, key));
    else if (key == "seed")
      sc.seed = static_cast<std::uint64_t>(parse_cell(value, line_no, key));
    else if (key == "validation_size")
      sc.validation_size = static_cast<int>(parse_cell(value, line_no, key));
    else if (key == "mode") {
      if (value == "oracle")
        sc.oracle = true;
      else if (value == "selection")
        sc.oracle = false;
      else
        throw std::runtime_error(path + ": mode must be 'oracle' or 'selection'");
    } else if (key == "reuse_alpha")
      sc.reuse_alpha = value == "1" || value == "true";
    else if (key == "beta") {
      const auto toks = split_line(value, ',');
      sc.beta_star.resize(static_cast<Eigen::Index>(toks.size()));
      for (std::size_t i = 0; i < toks.size(); ++i)
        sc.beta_star(static_cast<Eigen::Index>(i)) = parse_cell(toks[i], line_no, key);
      have_beta = true;
    } else
      throw std::runtime_error(path + ": unknown key '" + key + "'");
  }
  if (!have_beta) throw std::runtime_error(path + ": missing 'beta'");
  sc.validate();
  return sc;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& config, std::uint64_t seed,
                    const std::vector<std::string>& input_files) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  j["tool_version"] = kVersion;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& f : input_files) {
    char hex[32];
    std::snprintf(hex, sizeof hex, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_text_file(f))));
    inputs[f] = hex;
  }
  j["inputs"] = inputs;
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp"] = stamp;
  std::filesystem::create_directories(out_dir);
  write_json_file((std::filesystem::path(out_dir) / "manifest.json").string(), j);
}

}  // namespace pglmm
