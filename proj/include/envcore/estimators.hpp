#pragma once

#include <string>
#include <vector>

#include "envcore/linalg.hpp"
#include "envcore/model.hpp"

namespace envcore {

enum class EstimatorKind { um, cm, em, ecm, secm };

const char* to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& s);

struct ScaleOptions {
  double tol = 1e-8;
  int max_outer = 200;
  double log_bracket = 4.0;  // search log a_j within current ± log_bracket
  int grid_points = 17;
  double golden_tol = 1e-10;
  double grad_tol = 1e-6;  // BFGS stop on the log-scale gradient norm
};

struct FitOptions {
  OptimizerOptions optimizer;
  ScaleOptions scales;
  double pinv_cutoff = 1e-10;
};

struct EnvelopeFit {
  EstimatorKind kind = EstimatorKind::um;
  InterceptMode intercept_mode = InterceptMode::model3;
  int n = 0, r = 0, p = 0, k = 0;
  int dim = 0;  // u or v; r for um, k for cm

  MatrixXd beta;   // r x p
  VectorXd beta0;  // r
  MatrixXd alpha;  // k x p, raw-U coordinates (cm, ecm, secm)
  VectorXd alpha0;
  MatrixXd U;      // r x k as supplied (cm, ecm, secm)
  MatrixXd basis;  // Γ̂ (r x u), Φ̂ or Θ̂ (k x u); empty for um, cm
  VectorXd Lambda;  // secm scales, Lambda(0) = 1
  SymMatrix Omega, Omega0, Sigma, Sigma_DS;
  MatrixXd phi_DS;

  SymMatrix avar_beta;   // avar of √n vec(β̂), rp x rp
  SymMatrix avar_alpha;  // avar of √n vec(α̂), kp x kp (cm, ecm, secm)

  double loglik = 0.0;
  int n_params = 0;
  double objective = 0.0;  // envelope objective at the optimum (0 if none)
  int sweeps = 0;
  std::vector<std::string> notes;

  double bic() const;
  // η in the coordinates of the fitted basis: basisᵀ·(scaled α̂) or Γ̂ᵀβ̂.
  MatrixXd eta() const;
};

int n_params(EstimatorKind kind, int r, int p, int k, int dim, InterceptMode mode);

EnvelopeFit fit_um(const Dataset& data);
EnvelopeFit fit_cm(const Dataset& data, const MatrixXd& U, InterceptMode mode);
EnvelopeFit fit_em(const Dataset& data, int u, const FitOptions& opts = {});
EnvelopeFit fit_ecm(const Dataset& data, const MatrixXd& U, int u, InterceptMode mode,
                    const FitOptions& opts = {});
EnvelopeFit fit_secm(const Dataset& data, const MatrixXd& U, int v, InterceptMode mode,
                     const FitOptions& opts = {});

// Scaled objective log|GᵀAM1AG| + log|GᵀA⁻¹M2A⁻¹G| with A = diag(scales).
double scaled_envelope_objective(const MatrixXd& g, const VectorXd& scales, const MatrixXd& m1,
                                 const MatrixXd& m2);

// α̂_cm = (S_{D,X} − S_{D,S}S_S⁻¹S_{S,X})S_{X|S}⁻¹ in the coordinates of the supplied U.
MatrixXd constrained_alpha(const MomentSet& m);

// Gaussian log-likelihood of rows Y_i ~ N(β0 + βX_i, Σ), evaluated directly.
double gaussian_loglik(const Dataset& data, const VectorXd& beta0, const MatrixXd& beta,
                       const MatrixXd& Sigma);

// ---- asymptotic variances ----

// avar of √n vec(Gη) for the envelope model with basis G:
// Σ_X⁻¹⊗GΩGᵀ + (ηᵀ⊗G0)M†(η⊗G0ᵀ).
MatrixXd envelope_avar(const MatrixXd& Sigma_X, const MatrixXd& G, const MatrixXd& G0,
                       const MatrixXd& Omega, const MatrixXd& Omega0, const MatrixXd& eta,
                       double pinv_cutoff = 1e-10);

// Sandwich H(HᵀJH)†Hᵀ for α = DΘη, Σ = D(ΘΩΘᵀ + Θ0Ω0Θ0ᵀ)D with D = diag(scales),
// scales(0) = 1. With free_scales the remaining k-1 scales are parameters.
// Returns the avar of √n vec(α̂) (kp x kp).
MatrixXd scaled_envelope_avar(const MatrixXd& Sigma_X, const VectorXd& scales, const MatrixXd& Theta,
                              const MatrixXd& Theta0, const MatrixXd& Omega, const MatrixXd& Omega0,
                              const MatrixXd& eta, bool free_scales, double pinv_cutoff = 1e-10);

}  // namespace envcore
