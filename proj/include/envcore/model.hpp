#pragma once

#include <string>
#include <vector>

#include "envcore/linalg.hpp"

namespace envcore {

enum class InterceptMode { model2, model3 };

const char* to_string(InterceptMode mode);
InterceptMode intercept_mode_from_string(const std::string& s);

struct Dataset {
  MatrixXd Y;  // n x r
  MatrixXd X;  // n x p
  std::vector<std::string> response_names;
  std::vector<std::string> predictor_names;

  int n() const { return static_cast<int>(Y.rows()); }
  int r() const { return static_cast<int>(Y.cols()); }
  int p() const { return static_cast<int>(X.cols()); }
};

// Checks shapes, finiteness and n >= 2. Names are filled in when missing.
Dataset make_dataset(MatrixXd Y, MatrixXd X, std::vector<std::string> response_names = {},
                     std::vector<std::string> predictor_names = {});
void validate_dataset(const Dataset& data);
std::vector<std::string> dataset_warnings(const Dataset& data);

struct TransformedData {
  MatrixXd Y_D;  // n x k, rows are W1ᵀY_i
  MatrixXd Y_S;  // n x (r-k), rows are U0ᵀY_i
  MatrixXd W;    // (W1, U0)
  MatrixXd W1;   // U(UᵀU)⁻¹
  MatrixXd W2;   // U0
  MatrixXd U;    // as supplied
  double logdetW = 0.0;

  int k() const { return static_cast<int>(W1.cols()); }
  int r() const { return static_cast<int>(W.rows()); }
};

TransformedData transform_responses(const Dataset& data, const MatrixXd& U);
// U0 for a full-rank U: canonical orthonormal basis of span(U)⊥.
SemiOrthBasis constraint_complement(const MatrixXd& U);

// Divisor-n moments. Conditional covariances carry an intercept.
struct MomentSet {
  int n = 0;
  InterceptMode mode = InterceptMode::model3;
  VectorXd x_bar, d_bar, s_bar;
  MatrixXd S_X, S_D, S_S, S_DS, S_DX, S_SX, T_S;
  MatrixXd S_X_given_S;   // S_{X|S}
  MatrixXd S_D_given_S;   // S_{D|S}
  MatrixXd S_D_given_XS;  // S_{D|(X,S)}

  // Marginal second moment of Y_S entering the likelihood: T_S (model2) or S_S (model3).
  const MatrixXd& marginal_S() const { return mode == InterceptMode::model2 ? T_S : S_S; }
};

MomentSet compute_moments(const TransformedData& t, const MatrixXd& X, InterceptMode mode);

// Centered divisor-n cross moment of column blocks.
MatrixXd cross_moment(const MatrixXd& a, const MatrixXd& b);
// S_{a|b}: residual covariance of a on (1, b).
MatrixXd residual_covariance(const MatrixXd& a, const MatrixXd& b, const std::string& what);

struct CovDecomposition {
  MatrixXd phi_DS;     // k x (r-k)
  SymMatrix Sigma_S;   // U0ᵀΣU0
  SymMatrix Sigma_DS;  // (UᵀΣ⁻¹U)⁻¹ for the supplied U
  SymMatrix Sigma;
};

CovDecomposition conditional_decomposition(const SymMatrix& Sigma, const MatrixXd& U);

// Σ = W⁻ᵀ var(WᵀY) W⁻¹ with the blocks of the conditional decomposition.
MatrixXd assemble_sigma(const MatrixXd& U, const MatrixXd& U0, const MatrixXd& phi_DS,
                        const MatrixXd& Sigma_DS, const MatrixXd& Sigma_S);

}  // namespace envcore
