#include "pglmm/tsp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "pglmm/quadrature.hpp"

namespace pglmm {

void ExpressionStudy::validate() const {
  if (static_cast<Eigen::Index>(genes.size()) != values.cols())
    throw std::invalid_argument("study " + id + ": gene count does not match value columns");
  std::unordered_set<std::string> seen;
  for (const auto& g : genes)
    if (!seen.insert(g).second)
      throw std::invalid_argument("study " + id + ": duplicate gene id " + g);
  if (!values.allFinite())
    throw std::invalid_argument("study " + id + ": non-finite expression value");
  if (has_response && response.size() != values.rows())
    throw std::invalid_argument("study " + id + ": response length mismatch");
}

std::vector<std::string> common_genes(const std::vector<ExpressionStudy>& studies) {
  if (studies.empty()) return {};
  std::set<std::string> common(studies.front().genes.begin(), studies.front().genes.end());
  for (std::size_t k = 1; k < studies.size(); ++k) {
    std::set<std::string> keep;
    for (const auto& g : studies[k].genes)
      if (common.count(g)) keep.insert(g);
    common.swap(keep);
  }
  return {common.begin(), common.end()};
}

std::vector<GenePair> enumerate_pairs(const std::vector<std::string>& genes) {
  if (genes.size() < 2) throw std::invalid_argument("pair enumeration needs at least 2 genes");
  std::vector<std::string> sorted = genes;
  std::sort(sorted.begin(), sorted.end());
  std::vector<GenePair> pairs;
  pairs.reserve(sorted.size() * (sorted.size() - 1) / 2);
  for (std::size_t i = 0; i < sorted.size(); ++i)
    for (std::size_t j = i + 1; j < sorted.size(); ++j)
      pairs.push_back({sorted[i], sorted[j]});
  return pairs;
}

Eigen::MatrixXd tsp_transform(const ExpressionStudy& study, const std::vector<GenePair>& pairs) {
  std::unordered_map<std::string, int> col;
  for (std::size_t j = 0; j < study.genes.size(); ++j) col[study.genes[j]] = static_cast<int>(j);

  Eigen::MatrixXd out(study.n(), pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto ia = col.find(pairs[p].a);
    if (ia == col.end())
      throw std::invalid_argument("gene " + pairs[p].a + " not present in study " + study.id);
    const auto ib = col.find(pairs[p].b);
    if (ib == col.end())
      throw std::invalid_argument("gene " + pairs[p].b + " not present in study " + study.id);
    for (int i = 0; i < study.n(); ++i)
      out(i, p) = study.values(i, ia->second) > study.values(i, ib->second) ? 1.0 : 0.0;
  }
  return out;
}

ScreenResult screen_univariate(const Eigen::VectorXd& column, const Eigen::VectorXd& y,
                               const std::vector<int>& study_of_row, int K) {
  const Eigen::Index n = column.size();
  if (y.size() != n || static_cast<Eigen::Index>(study_of_row.size()) != n)
    throw std::invalid_argument("screening inputs have mismatched lengths");
  if (K < 1) throw std::invalid_argument("screening needs at least one study");

  std::vector<ScreenStudyCounts> counts(K);
  bool any0 = false, any1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = column(i);
    if (x != 0.0 && x != 1.0)
      throw std::invalid_argument("screening feature must be binary 0/1");
    if (y(i) != 0.0 && y(i) != 1.0)
      throw std::invalid_argument("screening response must be binary 0/1");
    const int k = study_of_row[i];
    if (k < 0 || k >= K) throw std::invalid_argument("study index out of range");
    if (x == 0.0) {
      counts[k].n0 += 1.0;
      counts[k].s0 += y(i);
      any0 = true;
    } else {
      counts[k].n1 += 1.0;
      counts[k].s1 += y(i);
      any1 = true;
    }
  }

  const double ybar = std::clamp(y.mean(), 1e-8, 1.0 - 1e-8);
  const double b0_init = std::log(ybar / (1.0 - ybar));

  ScreenResult res;
  if (!any0 || !any1) {
    res.informative = false;
    Eigen::VectorXd x0(2);
    x0 << b0_init, std::log(0.5);
    double fmin = 0.0;
    nelder_mead([&](const Eigen::VectorXd& p) { return -marginal_loglik_1re(counts, p); }, x0,
                {}, &fmin);
    res.score = -fmin;
    return res;
  }

  Eigen::VectorXd x0(4);
  x0 << b0_init, 0.0, std::log(0.5), std::log(0.5);
  double fmin = 0.0;
  nelder_mead([&](const Eigen::VectorXd& p) { return -marginal_loglik_2re(counts, p); }, x0, {},
              &fmin);
  res.score = -fmin;
  return res;
}

std::vector<RankedPair> dedup_ranked(std::vector<RankedPair> ranked) {
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedPair& a, const RankedPair& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pair.name() < b.pair.name();
  });
  std::unordered_set<std::string> used;
  for (auto& r : ranked) {
    r.kept = !used.count(r.pair.a) && !used.count(r.pair.b);
    if (r.kept) {
      used.insert(r.pair.a);
      used.insert(r.pair.b);
    }
  }
  return ranked;
}

std::vector<RankedPair> select_top(const std::vector<RankedPair>& deduped, int m,
                                   bool* truncated) {
  if (m < 1) throw std::invalid_argument("selection count must be positive");
  std::vector<RankedPair> out;
  for (const auto& r : deduped) {
    if (!r.kept) continue;
    out.push_back(r);
    if (static_cast<int>(out.size()) == m) break;
  }
  if (truncated) *truncated = static_cast<int>(out.size()) < m;
  return out;
}

TspPipelineResult tsp_screen_pipeline(const std::vector<ExpressionStudy>& studies, int top_m,
                                      int threads) {
  if (studies.empty()) throw std::invalid_argument("pipeline needs at least one study");
  for (const auto& s : studies) {
    s.validate();
    if (!s.has_response)
      throw std::invalid_argument("study " + s.id + " has no response; screening needs one");
  }

  const std::vector<std::string> genes = common_genes(studies);
  const std::vector<GenePair> pairs = enumerate_pairs(genes);
  const int K = static_cast<int>(studies.size());

  Eigen::Index total_n = 0;
  for (const auto& s : studies) total_n += s.n();

  Eigen::MatrixXd indicators(total_n, pairs.size());
  TspPipelineResult out;
  out.y.resize(total_n);
  out.study_of_row.resize(total_n);
  Eigen::Index at = 0;
  for (int k = 0; k < K; ++k) {
    const Eigen::MatrixXd block = tsp_transform(studies[k], pairs);
    indicators.middleRows(at, block.rows()) = block;
    out.y.segment(at, block.rows()) = studies[k].response;
    std::fill(out.study_of_row.begin() + at, out.study_of_row.begin() + at + block.rows(), k);
    out.study_ids.push_back(studies[k].id);
    at += block.rows();
  }

  std::vector<RankedPair> scored(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t p = next.fetch_add(1); p < pairs.size(); p = next.fetch_add(1)) {
      const ScreenResult r = screen_univariate(indicators.col(p), out.y, out.study_of_row, K);
      scored[p] = {pairs[p], r.score, r.informative, false};
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  out.scored = dedup_ranked(std::move(scored));
  const std::vector<RankedPair> top = select_top(out.scored, top_m, &out.truncated);
  if (out.truncated)
    std::cerr << "warning: only " << top.size() << " gene-disjoint pairs available, requested "
              << top_m << "\n";

  std::unordered_map<std::string, int> pair_col;
  for (std::size_t p = 0; p < pairs.size(); ++p) pair_col[pairs[p].name()] = static_cast<int>(p);
  out.features.resize(total_n, top.size());
  for (std::size_t j = 0; j < top.size(); ++j) {
    out.selected.push_back(top[j].pair);
    out.features.col(j) = indicators.col(pair_col.at(top[j].pair.name()));
  }
  return out;
}

}  // namespace pglmm
