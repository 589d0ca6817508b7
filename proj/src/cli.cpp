#include "pglmm/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pglmm/io.hpp"
#include "pglmm/version.hpp"

namespace pglmm {

namespace {

namespace fs = std::filesystem;

std::string join_argv(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct FitFlags {
  std::string data, response, study, z_spec, out;
  std::string family = "bernoulli";
  std::string penalty = "mcp";
  std::string structure = "full";
  double lambda1 = 0.0, lambda2 = 0.0;
  std::uint64_t seed = 0;
  int draws = 100, draws_cap = 2000, burnin = 200;
  int max_iter = 100;
  double epsilon = 1e-3;
  int threads = 1;

  void add_common(CLI::App* cmd) {
    cmd->add_option("--data", data, "input CSV")->required()->envname("PGLMM_DATA");
    cmd->add_option("--response", response, "response column")->required();
    cmd->add_option("--study", study, "study-label column")->required();
    cmd->add_option("--z", z_spec, "random-effect predictor names, comma separated");
    cmd->add_option("--family", family, "bernoulli or gaussian")->envname("PGLMM_FAMILY");
    cmd->add_option("--penalty", penalty, "mcp, scad, or l1")->envname("PGLMM_PENALTY");
    cmd->add_option("--structure", structure, "full or diagonal")->envname("PGLMM_STRUCTURE");
    cmd->add_option("--seed", seed, "base RNG seed")->envname("PGLMM_SEED");
    cmd->add_option("--draws", draws, "initial chain length per E-step");
    cmd->add_option("--draws-cap", draws_cap, "chain length ceiling");
    cmd->add_option("--burnin", burnin, "chain burn-in sweeps");
    cmd->add_option("--max-iter", max_iter, "EM iteration cap");
    cmd->add_option("--epsilon", epsilon, "EM convergence tolerance");
    cmd->add_option("--threads", threads, "worker thread cap; 1 is deterministic")
        ->envname("PGLMM_THREADS");
    cmd->add_option("--out", out, "output directory")->required()->envname("PGLMM_OUT");
  }

  FitConfig config() const {
    FitConfig cfg;
    cfg.lambda1 = lambda1;
    cfg.lambda2 = lambda2;
    cfg.penalty1 = cfg.penalty2 = parse_penalty(penalty);
    cfg.omega1 = cfg.omega2 = default_omega(cfg.penalty1);
    cfg.structure = parse_structure(structure);
    cfg.max_em_iter = max_iter;
    cfg.epsilon = epsilon;
    cfg.sampler.n_draws = draws;
    cfg.sampler.burnin = burnin;
    cfg.sampler.seed = seed;
    cfg.draws_cap = draws_cap;
    cfg.threads = threads;
    return cfg;
  }

  std::map<std::string, std::string> manifest_config() const {
    return {{"data", data},           {"response", response},
            {"study", study},         {"z", z_spec},
            {"family", family},       {"penalty", penalty},
            {"structure", structure}, {"lambda1", num(lambda1)},
            {"lambda2", num(lambda2)},{"draws", std::to_string(draws)},
            {"draws_cap", std::to_string(draws_cap)},
            {"burnin", std::to_string(burnin)},
            {"max_iter", std::to_string(max_iter)},
            {"epsilon", num(epsilon)},{"threads", std::to_string(threads)},
            {"out", out}};
  }
};

int run_fit(const FitFlags& f, const std::string& command) {
  const Family family = parse_family(f.family);
  MultiStudyDataset data = load_dataset(f.data, f.response, f.study, f.z_spec, family);
  FitResult fr = fit(data, f.config());
  fs::create_directories(f.out);
  write_json_file((fs::path(f.out) / "fit.json").string(),
                  fit_to_json(fr, family, data.column_names, data.total_n()));
  write_manifest(f.out, command, f.manifest_config(), f.seed, {f.data});
  std::cout << "fit: " << (fr.converged ? "converged" : "iteration cap reached") << " after "
            << fr.iterations << " iterations; " << fr.selected.s1.size()
            << " fixed and " << fr.selected.s2.size() << " random effects selected\n";
  return 0;
}

int run_tune(const FitFlags& f, const std::string& grid_spec, double min_ratio,
             double anchor_ratio, const std::string& command) {
  const Family family = parse_family(f.family);
  MultiStudyDataset data = load_dataset(f.data, f.response, f.study, f.z_spec, family);
  int n1 = 8, n2 = 8;
  if (!grid_spec.empty()) {
    const auto x = grid_spec.find('x');
    if (x == std::string::npos)
      throw CLI::ValidationError("--grid", "expected N1xN2, e.g. 8x8");
    n1 = std::stoi(grid_spec.substr(0, x));
    n2 = std::stoi(grid_spec.substr(x + 1));
  }
  TuningGrid grid = default_grid(data, n1, n2, min_ratio, anchor_ratio);
  GridSearchResult gs = grid_search(data, grid, f.config());
  fs::create_directories(f.out);
  write_json_file((fs::path(f.out) / "fit.json").string(),
                  fit_to_json(gs.best, family, data.column_names, data.total_n()));
  write_icq_csv((fs::path(f.out) / "icq.csv").string(), gs.table);
  auto cfg = f.manifest_config();
  cfg["grid"] = std::to_string(n1) + "x" + std::to_string(n2);
  cfg["min_ratio"] = num(min_ratio);
  cfg["anchor_ratio"] = num(anchor_ratio);
  write_manifest(f.out, command, cfg, f.seed, {f.data});
  const IcqRow& best = gs.table.rows[gs.table.best_index];
  std::cout << "tune: best ICQ " << best.icq << " at lambda1=" << best.lambda1
            << " lambda2=" << best.lambda2 << "\n";
  return 0;
}

int run_predict(const std::string& fit_path, const std::string& data_path,
                const std::string& out, const std::string& command) {
  const LoadedFit lf = fit_from_json(read_json_file(fit_path));
  const Eigen::MatrixXd X = load_design(data_path, lf.column_names);
  const Eigen::VectorXd pred = predict(lf.theta, lf.family, X);
  fs::create_directories(out);
  write_predictions_csv((fs::path(out) / "predictions.csv").string(), pred);
  write_manifest(out, command, {{"fit", fit_path}, {"data", data_path}, {"out", out}}, 0,
                 {fit_path, data_path});
  std::cout << "predict: " << pred.size() << " rows\n";
  return 0;
}

int run_tsp(const std::vector<std::string>& expr_paths, const std::string& response_col,
            int pairs, bool enumerate_only, int threads, const std::string& out,
            const std::string& command) {
  std::vector<ExpressionStudy> studies;
  for (std::size_t i = 0; i < expr_paths.size(); ++i)
    studies.push_back(load_expression_csv(expr_paths[i], "study" + std::to_string(i + 1),
                                          enumerate_only ? "" : response_col));
  const auto genes = common_genes(studies);
  const auto all_pairs = enumerate_pairs(genes);
  if (enumerate_only) {
    std::cout << genes.size() << " common genes, " << all_pairs.size()
              << " candidate pairs\n";
    return 0;
  }
  TspPipelineResult result = tsp_screen_pipeline(studies, pairs, threads);
  fs::create_directories(out);
  write_features_csv((fs::path(out) / "features.csv").string(), result);
  write_scores_csv((fs::path(out) / "scores.csv").string(), result.scored);
  std::map<std::string, std::string> cfg{{"response", response_col},
                                         {"pairs", std::to_string(pairs)},
                                         {"threads", std::to_string(threads)},
                                         {"out", out}};
  for (std::size_t i = 0; i < expr_paths.size(); ++i)
    cfg["expr" + std::to_string(i + 1)] = expr_paths[i];
  write_manifest(out, command, cfg, 0, expr_paths);
  std::cout << "tsp: " << result.selected.size() << " pairs selected from "
            << all_pairs.size() << " candidates"
            << (result.truncated ? " (fewer disjoint pairs than requested)" : "") << "\n";
  return 0;
}

GenePair pair_from_name(const std::string& name) {
  const auto us = name.find('_');
  if (us == std::string::npos) return {name, name};
  return {name.substr(0, us), name.substr(us + 1)};
}

int run_screen(const std::string& features_path, const std::string& response_col,
               const std::string& study_col, int top, int threads, const std::string& out,
               const std::string& command) {
  const CsvTable table = read_csv(features_path);
  const int yi = table.column_index(response_col);
  const int si = table.column_index(study_col);
  if (yi < 0) throw std::runtime_error("no response column '" + response_col + "'");
  if (si < 0) throw std::runtime_error("no study column '" + study_col + "'");

  std::vector<std::string> labels;
  std::vector<int> study_of_row;
  const int n = static_cast<int>(table.rows.size());
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const std::string label = table.rows[i][si];
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      labels.push_back(label);
      it = labels.end() - 1;
    }
    study_of_row.push_back(static_cast<int>(it - labels.begin()));
    y(i) = std::stod(table.rows[i][yi]);
  }

  std::vector<RankedPair> ranked;
  for (int j = 0; j < static_cast<int>(table.columns.size()); ++j) {
    if (j == yi || j == si) continue;
    Eigen::VectorXd col(n);
    for (int i = 0; i < n; ++i) col(i) = std::stod(table.rows[i][j]);
    const ScreenResult sr =
        screen_univariate(col, y, study_of_row, static_cast<int>(labels.size()));
    ranked.push_back({pair_from_name(table.columns[j]), sr.score, sr.informative, false});
  }
  ranked = dedup_ranked(std::move(ranked));
  bool truncated = false;
  const auto selected = select_top(ranked, top, &truncated);
  fs::create_directories(out);
  write_scores_csv((fs::path(out) / "scores.csv").string(), ranked);
  std::ostringstream sel;
  sel << "pair,score\n";
  for (const auto& r : selected) sel << r.pair.name() << ',' << num(r.score) << '\n';
  write_text_file((fs::path(out) / "selected.csv").string(), sel.str());
  write_manifest(out, command,
                 {{"features", features_path},
                  {"response", response_col},
                  {"study", study_col},
                  {"top", std::to_string(top)},
                  {"threads", std::to_string(threads)},
                  {"out", out}},
                 0, {features_path});
  std::cout << "screen: kept " << selected.size() << " of " << ranked.size() << " features"
            << (truncated ? " (fewer disjoint features than requested)" : "") << "\n";
  (void)threads;
  return 0;
}

int run_simulate(const std::string& scenario_path, const FitFlags& f, int grid_n1, int grid_n2,
                 const std::string& out, const std::string& command) {
  Scenario sc = load_scenario(scenario_path);
  StrategySettings settings;
  settings.grid_n1 = grid_n1;
  settings.grid_n2 = grid_n2;
  settings.glmm = f.config();
  settings.threads = f.threads;
  ReplicateTable table =
      replicate_table(sc, {Strategy::IND, Strategy::GLM, Strategy::GLMM}, settings);
  fs::create_directories(out);
  write_strategy_csv((fs::path(out) / "table.csv").string(), table);
  auto cfg = f.manifest_config();
  cfg["scenario"] = scenario_path;
  cfg["grid"] = std::to_string(grid_n1) + "x" + std::to_string(grid_n2);
  cfg.erase("data");
  cfg.erase("response");
  cfg.erase("study");
  cfg.erase("z");
  write_manifest(out, command, cfg, sc.seed, {scenario_path});
  std::cout << "simulate: " << sc.R << " replicates, " << table.failures << " failures\n";
  return 0;
}

int run_holdout(const FitFlags& f, const std::string& command) {
  const Family family = parse_family(f.family);
  MultiStudyDataset data = load_dataset(f.data, f.response, f.study, f.z_spec, family);
  HoldoutSettings settings;
  settings.lambda1 = f.lambda1;
  settings.lambda2 = f.lambda2;
  settings.glmm = f.config();
  const auto results = holdout_eval(data, settings);
  fs::create_directories(f.out);
  write_holdout_csv((fs::path(f.out) / "holdout.csv").string(), results);
  write_holdout_summary_csv((fs::path(f.out) / "holdout_summary.csv").string(), results);
  write_manifest(f.out, command, f.manifest_config(), f.seed, {f.data});
  std::cout << "holdout: " << results.size() << " train/test splits\n";
  return 0;
}

}  // namespace

int cli_dispatch(int argc, char** argv) {
  CLI::App app{"Penalized generalized linear mixed models for merged multi-study data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  const std::string command = join_argv(argc, argv);

  FitFlags fit_flags;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit one penalized GLMM");
  fit_flags.add_common(fit_cmd);
  fit_cmd->add_option("--lambda1", fit_flags.lambda1, "fixed-effect penalty level")
      ->required()
      ->envname("PGLMM_LAMBDA1");
  fit_cmd->add_option("--lambda2", fit_flags.lambda2, "random-effect penalty level")
      ->required()
      ->envname("PGLMM_LAMBDA2");

  FitFlags tune_flags;
  std::string grid_spec;
  double min_ratio = 0.05, anchor_ratio = 0.01;
  CLI::App* tune_cmd = app.add_subcommand("tune", "grid search selected by ICQ");
  tune_flags.add_common(tune_cmd);
  tune_cmd->add_option("--grid", grid_spec, "lambda grid size as N1xN2 (default 8x8)");
  tune_cmd->add_option("--min-ratio", min_ratio, "smallest lambda as a fraction of the bound");
  tune_cmd->add_option("--anchor-ratio", anchor_ratio, "anchor lambda fraction");

  std::string predict_fit, predict_data, predict_out;
  CLI::App* predict_cmd = app.add_subcommand("predict", "fixed-effect predictions from a fit");
  predict_cmd->add_option("--fit", predict_fit, "fit.json path")->required();
  predict_cmd->add_option("--data", predict_data, "design CSV")->required();
  predict_cmd->add_option("--out", predict_out, "output directory")->required();

  std::vector<std::string> expr_paths;
  std::string tsp_response = "response";
  int tsp_pairs = 50;
  bool tsp_enumerate = false;
  int tsp_threads = 1;
  std::string tsp_out;
  CLI::App* tsp_cmd = app.add_subcommand("tsp", "top-scoring-pair transform and screening");
  tsp_cmd->add_option("--expr", expr_paths, "per-study expression CSVs")->required();
  tsp_cmd->add_option("--response", tsp_response, "response column in the expression CSVs");
  CLI::Option* pairs_opt = tsp_cmd->add_option("--pairs", tsp_pairs, "pairs to select");
  CLI::Option* enum_opt =
      tsp_cmd->add_flag("--enumerate", tsp_enumerate, "report the candidate pair count only");
  pairs_opt->excludes(enum_opt);
  tsp_cmd->add_option("--threads", tsp_threads, "worker thread cap");
  tsp_cmd->add_option("--out", tsp_out, "output directory");

  std::string screen_features, screen_response = "response", screen_study = "study", screen_out;
  int screen_top = 50, screen_threads = 1;
  CLI::App* screen_cmd = app.add_subcommand("screen", "rank binary features by marginal fit");
  screen_cmd->add_option("--features", screen_features, "feature CSV")->required();
  screen_cmd->add_option("--response", screen_response, "response column");
  screen_cmd->add_option("--study", screen_study, "study-label column");
  screen_cmd->add_option("--top", screen_top, "features to keep");
  screen_cmd->add_option("--threads", screen_threads, "worker thread cap");
  screen_cmd->add_option("--out", screen_out, "output directory")->required();

  FitFlags sim_flags;
  std::string scenario_path;
  int sim_grid_n1 = 6, sim_grid_n2 = 4;
  std::string sim_out;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "replicate a simulation scenario");
  sim_cmd->add_option("--scenario", scenario_path, "scenario config file")->required();
  sim_cmd->add_option("--draws", sim_flags.draws, "initial chain length per E-step");
  sim_cmd->add_option("--draws-cap", sim_flags.draws_cap, "chain length ceiling");
  sim_cmd->add_option("--burnin", sim_flags.burnin, "chain burn-in sweeps");
  sim_cmd->add_option("--max-iter", sim_flags.max_iter, "EM iteration cap");
  sim_cmd->add_option("--epsilon", sim_flags.epsilon, "EM convergence tolerance");
  sim_cmd->add_option("--grid1", sim_grid_n1, "lambda1 grid points in selection mode");
  sim_cmd->add_option("--grid2", sim_grid_n2, "lambda2 grid points in selection mode");
  sim_cmd->add_option("--threads", sim_flags.threads, "worker thread cap")
      ->envname("PGLMM_THREADS");
  sim_cmd->add_option("--out", sim_out, "output directory")->required();

  FitFlags hold_flags;
  CLI::App* hold_cmd = app.add_subcommand("holdout", "hold-one-study-out comparison");
  hold_flags.add_common(hold_cmd);
  hold_cmd->add_option("--lambda1", hold_flags.lambda1, "penalty level; 0 uses the anchor rule");
  hold_cmd->add_option("--lambda2", hold_flags.lambda2, "penalty level; 0 uses the anchor rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit_flags, command);
    if (tune_cmd->parsed())
      return run_tune(tune_flags, grid_spec, min_ratio, anchor_ratio, command);
    if (predict_cmd->parsed()) return run_predict(predict_fit, predict_data, predict_out, command);
    if (tsp_cmd->parsed()) {
      if (!tsp_enumerate && tsp_out.empty())
        throw CLI::RequiredError("--out (required unless --enumerate)");
      return run_tsp(expr_paths, tsp_response, tsp_pairs, tsp_enumerate, tsp_threads, tsp_out,
                     command);
    }
    if (screen_cmd->parsed())
      return run_screen(screen_features, screen_response, screen_study, screen_top,
                        screen_threads, screen_out, command);
    if (sim_cmd->parsed()) return run_simulate(scenario_path, sim_flags, sim_grid_n1, sim_grid_n2,
                                               sim_out, command);
    if (hold_cmd->parsed()) return run_holdout(hold_flags, command);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace pglmm
