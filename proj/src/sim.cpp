#include "pglmm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "pglmm/glm.hpp"
#include "pglmm/rng.hpp"

namespace pglmm {

namespace {

Eigen::MatrixXd oracle_columns(const Eigen::MatrixXd& X, int m) {
  return X.leftCols(m + 1);
}

StudyData oracle_study(const StudyData& s, int m) {
  StudyData out;
  out.id = s.id;
  out.y = s.y;
  out.X = oracle_columns(s.X, m);
  out.z_cols.resize(m + 1);
  for (int j = 0; j <= m; ++j) out.z_cols[j] = j;
  return out;
}

double pe_med(const Eigen::VectorXd& y, const Eigen::VectorXd& phat) {
  return median((y - phat).cwiseAbs());
}

// True/false positive counts over slope columns 1..p.
std::pair<double, double> tp_fp(const std::vector<int>& selected, const Scenario& sc) {
  const int m = static_cast<int>(sc.beta_star.size()) - 1;
  double tp = 0.0, fp = 0.0;
  for (int j : selected) {
    if (j == 0) continue;
    const bool truly_nonzero = j <= m && sc.beta_star(j) != 0.0;
    if (truly_nonzero)
      tp += 1.0;
    else
      fp += 1.0;
  }
  return {tp, fp};
}

std::vector<int> nonzero_slopes(const Eigen::VectorXd& beta) {
  std::vector<int> out;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta(j) != 0.0) out.push_back(static_cast<int>(j));
  return out;
}

}  // namespace

double median(Eigen::VectorXd v) {
  if (v.size() == 0) throw std::invalid_argument("median of empty vector");
  std::sort(v.data(), v.data() + v.size());
  const Eigen::Index n = v.size();
  return n % 2 == 1 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

void Scenario::validate() const {
  if (N < K || K < 1) throw std::invalid_argument("scenario needs N >= K >= 1");
  if (sigma2 < 0.0) throw std::invalid_argument("sigma2 must be nonnegative");
  if (beta_star.size() < 1) throw std::invalid_argument("beta_star must include an intercept");
  if (p < static_cast<int>(beta_star.size()) - 1)
    throw std::invalid_argument("p must cover the generator slopes");
  if (validation_size < 1 || R < 1) throw std::invalid_argument("scenario sizes out of range");
}

std::vector<int> study_sizes(int N, int K) {
  if (K < 1 || N < K) throw std::invalid_argument("need N >= K >= 1");
  std::vector<int> sizes(K);
  if (K == 1) {
    sizes[0] = N;
    return sizes;
  }
  sizes[0] = static_cast<int>(std::lround(N / 3.0));
  const int rem = N - sizes[0];
  const int base = rem / (K - 1);
  const int extra = rem % (K - 1);
  for (int k = 1; k < K; ++k) sizes[k] = base + (k - 1 < extra ? 1 : 0);
  return sizes;
}

GeneratedData gen_scenario(const Scenario& sc, int replicate) {
  sc.validate();
  Rng rng(chain_seed(sc.seed, "replicate", replicate));
  const int m = static_cast<int>(sc.beta_star.size()) - 1;
  const double sigma = std::sqrt(sc.sigma2);

  auto draw_alpha = [&] {
    Eigen::VectorXd a(m + 1);
    for (int j = 0; j <= m; ++j) a(j) = sigma * rng.normal();
    return a;
  };
  auto gen_rows = [&](int n, const std::vector<Eigen::VectorXd>& alphas, bool cycle) {
    StudyData s;
    s.X.resize(n, sc.p + 1);
    s.y.resize(n);
    for (int i = 0; i < n; ++i) {
      s.X(i, 0) = 1.0;
      for (int j = 1; j <= sc.p; ++j) s.X(i, j) = rng.normal();
      const Eigen::VectorXd& a = alphas[cycle ? i % alphas.size() : 0];
      double eta = 0.0;
      for (int j = 0; j <= m; ++j) eta += (sc.beta_star(j) + a(j)) * s.X(i, j);
      s.y(i) = rng.uniform() < invlogit(eta) ? 1.0 : 0.0;
    }
    for (int j = 0; j <= sc.p; ++j) s.z_cols.push_back(j);
    return s;
  };

  GeneratedData out;
  out.train.family = {FamilyKind::Bernoulli};
  const std::vector<int> sizes = study_sizes(sc.N, sc.K);
  std::vector<Eigen::VectorXd> train_alphas;
  for (int k = 0; k < sc.K; ++k) {
    std::vector<Eigen::VectorXd> a{draw_alpha()};
    train_alphas.push_back(a[0]);
    StudyData s = gen_rows(sizes[k], a, false);
    s.id = "study" + std::to_string(k + 1);
    out.train.studies.push_back(std::move(s));
  }
  out.train.column_names.push_back("(intercept)");
  for (int j = 1; j <= sc.p; ++j) out.train.column_names.push_back("x" + std::to_string(j));

  if (sc.reuse_alpha) {
    out.validation = gen_rows(sc.validation_size, train_alphas, true);
  } else {
    std::vector<Eigen::VectorXd> a{draw_alpha()};
    out.validation = gen_rows(sc.validation_size, a, false);
  }
  out.validation.id = "validation";
  return out;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::IND: return "IND";
    case Strategy::GLM: return "GLM";
    case Strategy::GLMM: return "GLMM";
  }
  throw std::logic_error("unreachable");
}

StrategyMetrics run_strategy(Strategy strategy, const Scenario& sc, const GeneratedData& data,
                             const StrategySettings& settings) {
  const int m = static_cast<int>(sc.beta_star.size()) - 1;
  const Family family{FamilyKind::Bernoulli};
  const Eigen::MatrixXd Xval_full = data.validation.X;
  const Eigen::MatrixXd Xval_or = oracle_columns(Xval_full, m);

  StrategyMetrics metrics;
  metrics.strategy = strategy;
  metrics.tp_fp_defined = !sc.oracle;
  metrics.mean_coef = Eigen::VectorXd::Zero(m + 1);

  auto glm_predict = [&](const Eigen::VectorXd& beta, const Eigen::MatrixXd& X) {
    Eigen::VectorXd eta = X * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = invlogit(eta(i));
    return eta;
  };

  if (strategy == Strategy::IND) {
    double pe_sum = 0.0, tp_sum = 0.0, fp_sum = 0.0;
    int used = 0;
    for (const auto& study : data.train.studies) {
      Eigen::VectorXd beta;
      if (sc.oracle) {
        BicPath path = bic_path(oracle_columns(study.X, m), study.y, family, PenaltyKind::L1,
                                settings.glm_path_points, settings.glm_min_ratio);
        beta = path.best.beta;
      } else {
        BicPath path = bic_path(study.X, study.y, family, PenaltyKind::MCP,
                                settings.glm_path_points, settings.glm_min_ratio);
        beta = path.best.beta;
      }
      const bool bad = beta.lpNorm<Eigen::Infinity>() > 15.0;
      if (bad) {
        ++metrics.excluded_studies;
        std::cerr << "warning: study " << study.id
                  << " excluded from study-by-study averages (unstable fit)\n";
        continue;
      }
      ++used;
      if (sc.oracle) {
        pe_sum += pe_med(data.validation.y, glm_predict(beta, Xval_or));
        metrics.mean_coef += beta;
      } else {
        pe_sum += pe_med(data.validation.y, glm_predict(beta, Xval_full));
        metrics.mean_coef += beta.head(m + 1);
        auto [tp, fp] = tp_fp(nonzero_slopes(beta), sc);
        tp_sum += tp;
        fp_sum += fp;
      }
    }
    if (used == 0) throw std::runtime_error("every per-study fit was excluded");
    metrics.pe_med = pe_sum / used;
    metrics.mean_coef /= used;
    if (!sc.oracle) {
      metrics.tp = tp_sum / used;
      metrics.fp = fp_sum / used;
    }
    return metrics;
  }

  if (strategy == Strategy::GLM) {
    const Eigen::MatrixXd Xm = data.train.merged_X();
    const Eigen::VectorXd ym = data.train.merged_y();
    Eigen::VectorXd beta;
    if (sc.oracle) {
      BicPath path = bic_path(oracle_columns(Xm, m), ym, family, PenaltyKind::L1,
                              settings.glm_path_points, settings.glm_min_ratio);
      beta = path.best.beta;
      metrics.pe_med = pe_med(data.validation.y, glm_predict(beta, Xval_or));
      metrics.mean_coef = beta;
    } else {
      BicPath path = bic_path(Xm, ym, family, PenaltyKind::MCP, settings.glm_path_points,
                              settings.glm_min_ratio);
      beta = path.best.beta;
      metrics.pe_med = pe_med(data.validation.y, glm_predict(beta, Xval_full));
      metrics.mean_coef = beta.head(m + 1);
      auto [tp, fp] = tp_fp(nonzero_slopes(beta), sc);
      metrics.tp = tp;
      metrics.fp = fp;
    }
    return metrics;
  }

  // GLMM
  FitConfig cfg = settings.glmm;
  cfg.threads = settings.threads;
  cfg.warm_start.reset();
  if (sc.oracle) {
    MultiStudyDataset od;
    od.family = family;
    for (const auto& s : data.train.studies) od.studies.push_back(oracle_study(s, m));
    cfg.lambda1 = 0.0;
    cfg.lambda2 = 0.0;
    cfg.structure = CovStructure::FullLowerTriangular;
    FitResult fr = fit(od, cfg);
    metrics.mean_coef = fr.theta.beta;
    metrics.pe_med = pe_med(data.validation.y, predict(fr.theta, family, Xval_or));
    return metrics;
  }

  cfg.structure = data.train.q() > 10 ? CovStructure::Diagonal
                                      : CovStructure::FullLowerTriangular;
  TuningGrid grid = default_grid(data.train, settings.grid_n1, settings.grid_n2,
                                 settings.grid_min_ratio, settings.anchor_ratio);
  GridSearchResult gs = grid_search(data.train, grid, cfg);
  metrics.mean_coef = gs.best.theta.beta.head(m + 1);
  metrics.pe_med = pe_med(data.validation.y, predict(gs.best.theta, family, Xval_full));
  auto [tp, fp] = tp_fp(gs.best.selected.s1, sc);
  metrics.tp = tp;
  metrics.fp = fp;
  return metrics;
}

ReplicateTable replicate_table(const Scenario& sc, const std::vector<Strategy>& strategies,
                               const StrategySettings& settings) {
  sc.validate();
  ReplicateTable table;
  table.scenario = sc;
  const int m = static_cast<int>(sc.beta_star.size()) - 1;

  std::vector<StrategyMetrics> sums(strategies.size());
  std::vector<int> counts(strategies.size(), 0);
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    sums[i].strategy = strategies[i];
    sums[i].mean_coef = Eigen::VectorXd::Zero(m + 1);
    sums[i].tp_fp_defined = !sc.oracle;
  }

  for (int r = 0; r < sc.R; ++r) {
    const GeneratedData data = gen_scenario(sc, r);
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      StrategySettings rep_settings = settings;
      rep_settings.glmm.sampler.seed = chain_seed(sc.seed, "fit", r);
      try {
        const StrategyMetrics mr = run_strategy(strategies[i], sc, data, rep_settings);
        sums[i].mean_coef += mr.mean_coef;
        sums[i].pe_med += mr.pe_med;
        sums[i].tp += mr.tp;
        sums[i].fp += mr.fp;
        sums[i].excluded_studies += mr.excluded_studies;
        ++counts[i];
      } catch (const std::exception& ex) {
        ++table.failures;
        std::cerr << "warning: replicate " << r << " strategy " << strategy_name(strategies[i])
                  << " failed: " << ex.what() << "\n";
      }
    }
  }

  for (std::size_t i = 0; i < strategies.size(); ++i) {
    if (counts[i] > 0) {
      sums[i].mean_coef /= counts[i];
      sums[i].pe_med /= counts[i];
      sums[i].tp /= counts[i];
      sums[i].fp /= counts[i];
    }
    table.means.push_back(sums[i]);
  }
  return table;
}

std::vector<HoldoutStudyResult> holdout_eval(const MultiStudyDataset& data,
                                             const HoldoutSettings& settings) {
  data.validate();
  const int K = data.K();
  if (K < 2) throw std::invalid_argument("hold-one-study-out needs at least 2 studies");
  const Family family = data.family;

  std::vector<HoldoutStudyResult> results;
  for (int held = 0; held < K; ++held) {
    MultiStudyDataset train;
    train.family = family;
    train.column_names = data.column_names;
    for (int k = 0; k < K; ++k)
      if (k != held) train.studies.push_back(data.studies[k]);
    const StudyData& test = data.studies[held];

    HoldoutStudyResult res;
    res.held_out = test.id;

    FitConfig cfg = settings.glmm;
    cfg.warm_start.reset();
    cfg.structure = train.q() > 10 ? CovStructure::Diagonal
                                   : CovStructure::FullLowerTriangular;
    const double lam_max = mcecm_lambda_max(train);
    cfg.lambda1 = settings.lambda1 > 0.0 ? settings.lambda1 : settings.anchor_ratio * lam_max;
    cfg.lambda2 = settings.lambda2 > 0.0 ? settings.lambda2 : settings.anchor_ratio * lam_max;
    FitResult fr = fit(train, cfg);
    res.err_glmm = (test.y - predict(fr.theta, family, test.X)).cwiseAbs();

    BicPath merged = bic_path(train.merged_X(), train.merged_y(), family, PenaltyKind::MCP,
                              settings.glm_path_points, settings.glm_min_ratio);
    Eigen::VectorXd eta = test.X * merged.best.beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = invlogit(eta(i));
    res.err_glm_merged = (test.y - eta).cwiseAbs();

    Eigen::VectorXd avg = Eigen::VectorXd::Zero(test.n());
    for (const auto& s : train.studies) {
      BicPath per = bic_path(s.X, s.y, family, PenaltyKind::MCP, settings.glm_path_points,
                             settings.glm_min_ratio);
      Eigen::VectorXd e = test.X * per.best.beta;
      for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = invlogit(e(i));
      avg += e;
    }
    avg /= static_cast<double>(train.K());
    res.err_glm_per_study = (test.y - avg).cwiseAbs();

    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace pglmm
