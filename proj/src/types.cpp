#include "pglmm/types.hpp"

#include <algorithm>
#include <cmath>

namespace pglmm {

Family parse_family(const std::string& name) {
  if (name == "bernoulli") return {FamilyKind::Bernoulli};
  if (name == "gaussian") return {FamilyKind::Gaussian};
  throw std::invalid_argument("unknown family: " + name);
}

std::string family_name(const Family& f) {
  return f.kind == FamilyKind::Bernoulli ? "bernoulli" : "gaussian";
}

CovStructure parse_structure(const std::string& name) {
  if (name == "full") return CovStructure::FullLowerTriangular;
  if (name == "diagonal") return CovStructure::Diagonal;
  throw std::invalid_argument("unknown covariance structure: " + name);
}

std::string structure_name(CovStructure s) {
  return s == CovStructure::FullLowerTriangular ? "full" : "diagonal";
}

void StudyData::validate() const {
  if (y.size() != X.rows())
    throw std::invalid_argument("study " + id + ": response and design row counts differ");
  if (X.cols() == 0 || X.col(0).minCoeff() != 1.0 || X.col(0).maxCoeff() != 1.0)
    throw std::invalid_argument("study " + id + ": design must carry a leading intercept column of ones");
  if (z_cols.empty())
    throw std::invalid_argument("study " + id + ": at least one random-effect column required");
  for (int c : z_cols)
    if (c < 0 || c >= p())
      throw std::invalid_argument("study " + id + ": random-effect column index out of range");
  if (!X.allFinite())
    throw std::invalid_argument("study " + id + ": design contains a non-finite value");
}

Eigen::MatrixXd MultiStudyDataset::merged_X() const {
  Eigen::MatrixXd out(total_n(), p());
  Eigen::Index row = 0;
  for (const auto& s : studies) {
    out.middleRows(row, s.n()) = s.X;
    row += s.n();
  }
  return out;
}

Eigen::VectorXd MultiStudyDataset::merged_y() const {
  Eigen::VectorXd out(total_n());
  Eigen::Index row = 0;
  for (const auto& s : studies) {
    out.segment(row, s.n()) = s.y;
    row += s.n();
  }
  return out;
}

void MultiStudyDataset::validate() const {
  if (studies.empty()) throw std::invalid_argument("dataset has no studies");
  const int p0 = studies.front().p();
  const auto& z0 = studies.front().z_cols;
  for (const auto& s : studies) {
    s.validate();
    family.validate_response(s.y);
    if (s.p() != p0)
      throw std::invalid_argument("study " + s.id + ": column count differs across studies");
    if (s.z_cols != z0)
      throw std::invalid_argument("study " + s.id + ": random-effect columns differ across studies");
  }
  if (!column_names.empty() && static_cast<int>(column_names.size()) != p0)
    throw std::invalid_argument("column name count does not match design width");
}

Eigen::MatrixXd Theta::Gamma() const {
  const int Q = q();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(Q, Q);
  for (int t = 0; t < Q; ++t) {
    if (structure == CovStructure::FullLowerTriangular) {
      for (int u = 0; u < static_cast<int>(gamma[t].size()); ++u) G(t, u) = gamma[t](u);
    } else {
      G(t, t) = gamma[t](0);
    }
  }
  return G;
}

Eigen::VectorXd Theta::gamma_flat() const {
  Eigen::VectorXd flat(gamma_dim());
  Eigen::Index at = 0;
  for (const auto& g : gamma) {
    flat.segment(at, g.size()) = g;
    at += g.size();
  }
  return flat;
}

Theta Theta::make(Eigen::VectorXd beta, int q, CovStructure structure,
                  double diag_init, double tau) {
  Theta th;
  th.beta = std::move(beta);
  th.structure = structure;
  th.tau = tau;
  th.gamma.resize(q);
  for (int t = 0; t < q; ++t) {
    const int len = structure == CovStructure::FullLowerTriangular ? t + 1 : 1;
    th.gamma[t] = Eigen::VectorXd::Zero(len);
    th.gamma[t](structure == CovStructure::FullLowerTriangular ? t : 0) = diag_init;
  }
  return th;
}

std::vector<Eigen::VectorXd> Theta::gamma_from_flat(const Eigen::VectorXd& flat,
                                                    int q, CovStructure structure) {
  std::vector<Eigen::VectorXd> gamma(q);
  Eigen::Index at = 0;
  for (int t = 0; t < q; ++t) {
    const int len = structure == CovStructure::FullLowerTriangular ? t + 1 : 1;
    if (at + len > flat.size()) throw std::invalid_argument("gamma vector too short for structure");
    gamma[t] = flat.segment(at, len);
    at += len;
  }
  if (at != flat.size()) throw std::invalid_argument("gamma vector too long for structure");
  return gamma;
}

void Theta::validate() const {
  if (beta.size() == 0) throw std::invalid_argument("beta is empty");
  for (int t = 0; t < q(); ++t) {
    const int want = structure == CovStructure::FullLowerTriangular ? t + 1 : 1;
    if (static_cast<int>(gamma[t].size()) != want)
      throw std::invalid_argument("gamma group " + std::to_string(t) + " has wrong length");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
}

SelectedSets selected_sets(const Theta& theta) {
  SelectedSets sel;
  for (int j = 0; j < theta.p(); ++j)
    if (theta.beta(j) != 0.0) sel.s1.push_back(j);
  for (int t = 0; t < theta.q(); ++t)
    if ((theta.gamma[t].array() != 0.0).any()) sel.s2.push_back(t);
  return sel;
}

}  // namespace pglmm
