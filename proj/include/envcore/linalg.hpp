#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace envcore {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class SymMatrix {
 public:
  SymMatrix() = default;
  // Rejects input that is not symmetric to 1e-12 relative; stores the symmetric part.
  explicit SymMatrix(const MatrixXd& m);
  // Symmetrizes without checking; for matrices symmetric up to rounding.
  static SymMatrix symmetrize(const MatrixXd& m);
  static SymMatrix identity(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  const MatrixXd& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  // smallest eigenvalue > dim * eps * largest eigenvalue
  bool is_positive_definite() const;
  double log_det() const;
  SymMatrix inverse() const;

 private:
  MatrixXd m_;
};

// Orthonormal columns in canonical form. Only span(G) carries meaning; the
// canonical signs and ordering exist so that output is reproducible.
class SemiOrthBasis {
 public:
  SemiOrthBasis() = default;
  // Requires GᵀG = I to 1e-10 Frobenius.
  explicit SemiOrthBasis(const MatrixXd& g);
  static SemiOrthBasis empty(int rows);
  // First `cols` columns of the identity.
  static SemiOrthBasis leading_identity(int rows, int cols);
  // Orthonormal basis of span(a) for full-column-rank a.
  static SemiOrthBasis of_span(const MatrixXd& a);

  int rows() const { return rows_; }
  int cols() const { return static_cast<int>(g_.cols()); }
  const MatrixXd& matrix() const { return g_; }
  MatrixXd projector() const { return g_ * g_.transpose(); }

 private:
  int rows_ = 0;
  MatrixXd g_;
};

// Canonical column signs and ordering; input columns must be orthonormal.
MatrixXd canonicalize_columns(const MatrixXd& g);

double envelope_objective(const SemiOrthBasis& g, const SymMatrix& m1, const SymMatrix& m2);
double envelope_objective(const MatrixXd& g, const MatrixXd& m1, const MatrixXd& m2);

struct OptimizerOptions {
  double tol = 1e-8;
  int max_sweeps = 500;
  int n_random = 0;
  std::uint64_t seed = 0;
  bool jitter = false;
  double jitter_delta = 1e-8;
  int inner_max_iter = 200;
  double inner_grad_tol = 1e-11;
};

struct EnvelopeOptimum {
  SemiOrthBasis basis;
  double objective = 0.0;
  int sweeps = 0;
  std::vector<double> trace;  // objective after each sweep of the winning start
  bool jittered = false;
  int starts = 0;
};

EnvelopeOptimum minimize_envelope_objective(const SymMatrix& m1, const SymMatrix& m2, int u,
                                            const OptimizerOptions& opts = {});

// Coordinate-descent sweeps from a single start, no multi-start.
EnvelopeOptimum refine_envelope_basis(const SymMatrix& m1, const SymMatrix& m2,
                                      const MatrixXd& start, const OptimizerOptions& opts = {});

SemiOrthBasis complete_basis(const SemiOrthBasis& b);
double subspace_distance(const SemiOrthBasis& a, const SemiOrthBasis& b);

// ---- dense helpers shared by the estimators ----

MatrixXd kron(const MatrixXd& a, const MatrixXd& b);
// Moore-Penrose inverse of a symmetric matrix; eigenvalues with
// |λ| <= rel_cutoff * max|λ| are treated as zero.
MatrixXd pinv_sym(const MatrixXd& a, double rel_cutoff = 1e-10);
double logdet_pd(const MatrixXd& a, const std::string& what);
MatrixXd inverse_pd(const MatrixXd& a, const std::string& what);
bool is_psd(const MatrixXd& a, double tol);

// vec index convention: column-major, vec(A)[i + j*rows] = A(i, j).
MatrixXd duplication_matrix(int n);
MatrixXd elimination_matrix(int n);
MatrixXd commutation_matrix(int rows, int cols);
VectorXd vech(const MatrixXd& a);
VectorXd vec(const MatrixXd& a);

}  // namespace envcore
