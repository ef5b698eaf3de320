#pragma once

#include <optional>
#include <string>
#include <vector>

#include "envcore/estimators.hpp"

namespace envcore {

struct DimensionCandidate {
  int dim = 0;
  bool ok = false;
  double loglik = 0.0;
  int n_params = 0;
  double bic = 0.0;
  std::string error;  // set when the fit failed
};

struct DimensionSelection {
  EstimatorKind kind = EstimatorKind::em;
  int selected = -1;
  std::vector<DimensionCandidate> trace;
  std::vector<std::string> warnings;
};

// BIC over every admissible dimension; ties go to the smaller dimension.
// U is required for ecm and secm. Failed candidates are skipped with a warning.
DimensionSelection select_dimension(const Dataset& data, EstimatorKind kind,
                                    const std::optional<MatrixXd>& U = std::nullopt,
                                    InterceptMode mode = InterceptMode::model3,
                                    const FitOptions& opts = {});

enum class TestKind { row_test, wald, contrast };
const char* to_string(TestKind kind);

struct TestResult {
  TestKind kind = TestKind::row_test;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double loglik_null = 0.0;
  double loglik_alt = 0.0;
  bool clipped = false;  // raw difference was negative
};

double chi2_upper_tail(double x, int df);
double normal_two_sided(double z);

// H0: the last k2 rows of α vanish, within the ecm model of dimension u.
TestResult test_rows(const Dataset& data, const MatrixXd& U, int u, int k2, InterceptMode mode,
                     const FitOptions& opts = {});

struct ContrastFit {
  MatrixXd c1, c2;     // p x p1, p x (p - p1)
  int p1 = 0, p2 = 0, u1 = 0;
  MatrixXd alpha1;     // k x p1
  MatrixXd alpha1_cm;  // α̂_cm c1
  MatrixXd basis;      // k x u1
  SymMatrix Omega, Omega0;
  SymMatrix S_Z1_given_Z2;
  SymMatrix avar_alpha1, avar_Ualpha1;
  SymMatrix avar_alpha1_cm, avar_Ualpha1_cm;
  double loglik = 0.0;
  double objective = 0.0;
};

ContrastFit fit_contrast(const Dataset& data, const MatrixXd& U, const MatrixXd& c1, int u1,
                         InterceptMode mode, const FitOptions& opts = {});

struct ProfileEstimate {
  VectorXd x_new;
  VectorXd mean;  // P_U ȳ + Uα̂1
  SymMatrix avar;
  VectorXd mean_cm;  // same with u1 = k
  SymMatrix avar_cm;
};

ProfileEstimate estimate_profile(const Dataset& data, const MatrixXd& U, const VectorXd& x_new, int u1,
                                 const FitOptions& opts = {});

// Two-sided normal p-values for every β̂_ij using the plug-in avar; r x p.
MatrixXd wald_pvalues(const EnvelopeFit& fit);

}  // namespace envcore
