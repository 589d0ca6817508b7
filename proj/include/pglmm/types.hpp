#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace pglmm {

enum class FamilyKind { Bernoulli, Gaussian };

// Canonical exponential family. Bernoulli uses the logit link with the
// dispersion fixed at 1; gaussian uses the identity link with free tau.
struct Family {
  FamilyKind kind = FamilyKind::Bernoulli;

  bool tau_free() const { return kind == FamilyKind::Gaussian; }

  void validate_response(const Eigen::VectorXd& y) const {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (!std::isfinite(y(i)))
        throw std::invalid_argument("response contains a non-finite value");
      if (kind == FamilyKind::Bernoulli && y(i) != 0.0 && y(i) != 1.0)
        throw std::invalid_argument("bernoulli family requires responses in {0,1}");
    }
  }
};

Family parse_family(const std::string& name);
std::string family_name(const Family& f);

// Covariance structure of Gamma. Full keeps the whole lower triangle
// (group t has t entries); Diagonal keeps one entry per row.
enum class CovStructure { FullLowerTriangular, Diagonal };

CovStructure parse_structure(const std::string& name);
std::string structure_name(CovStructure s);

// One study: response vector, predictor matrix with a leading all-ones
// intercept column, and the column subset that carries random effects.
struct StudyData {
  std::string id;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<int> z_cols;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int q() const { return static_cast<int>(z_cols.size()); }

  // Materialized random-effect design, X restricted to z_cols.
  Eigen::MatrixXd Z() const {
    Eigen::MatrixXd z(X.rows(), z_cols.size());
    for (std::size_t j = 0; j < z_cols.size(); ++j) z.col(j) = X.col(z_cols[j]);
    return z;
  }

  void validate() const;
};

struct MultiStudyDataset {
  Family family;
  std::vector<StudyData> studies;
  std::vector<std::string> column_names;  // optional, parallel to X columns

  int K() const { return static_cast<int>(studies.size()); }
  int p() const { return studies.empty() ? 0 : studies.front().p(); }
  int q() const { return studies.empty() ? 0 : studies.front().q(); }
  int total_n() const {
    int n = 0;
    for (const auto& s : studies) n += s.n();
    return n;
  }

  // Merged rows across studies, in study order.
  Eigen::MatrixXd merged_X() const;
  Eigen::VectorXd merged_y() const;

  void validate() const;
};

// Model parameters theta = (beta, gamma, tau). gamma is stored as the
// row groups of the lower-triangular Gamma: group t (0-based) holds the
// t+1 leading entries of row t, or a single diagonal entry under the
// diagonal structure.
struct Theta {
  Eigen::VectorXd beta;
  std::vector<Eigen::VectorXd> gamma;
  double tau = 1.0;
  CovStructure structure = CovStructure::FullLowerTriangular;

  int p() const { return static_cast<int>(beta.size()); }
  int q() const { return static_cast<int>(gamma.size()); }

  int gamma_dim() const {
    int d = 0;
    for (const auto& g : gamma) d += static_cast<int>(g.size());
    return d;
  }

  Eigen::MatrixXd Gamma() const;
  Eigen::VectorXd gamma_flat() const;

  static Theta make(Eigen::VectorXd beta, int q, CovStructure structure,
                    double diag_init = 0.0, double tau = 1.0);
  static std::vector<Eigen::VectorXd> gamma_from_flat(const Eigen::VectorXd& flat,
                                                      int q, CovStructure structure);

  void validate() const;
};

// Indices of nonzero fixed effects (S1, into beta) and nonzero
// variance-component groups (S2, into gamma groups).
struct SelectedSets {
  std::vector<int> s1;
  std::vector<int> s2;
};

SelectedSets selected_sets(const Theta& theta);

}  // namespace pglmm
