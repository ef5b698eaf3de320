#include <gtest/gtest.h>

#include <random>

#include "envcore/errors.hpp"
#include "envcore/estimators.hpp"
#include "envcore/fixtures.hpp"
#include "envcore/inference.hpp"

using namespace envcore;

namespace {

MatrixXd normal(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> nd;
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

MatrixXd dental_U() {
  MatrixXd U(4, 2);
  U.col(0).setOnes();
  U.col(1) = dental_ages();
  return U;
}

VectorXd avar_diag(const EnvelopeFit& f) { return f.avar_beta.matrix().diagonal(); }

// Data from a constrained envelope model with r = 7, k = 4, p = 2.
Dataset synthetic(std::uint64_t seed, int n, MatrixXd& U) {
  std::mt19937_64 rng(seed);
  U = normal(rng, 7, 4);
  MatrixXd phi = MatrixXd::Zero(4, 1);
  phi(0, 0) = 1.0;
  const MatrixXd alpha = phi * normal(rng, 1, 2) * 2.0;
  const MatrixXd X = normal(rng, n, 2);
  const MatrixXd noise = normal(rng, n, 7);
  MatrixXd L = normal(rng, 7, 7) * 0.4;
  L.diagonal().array() += 1.0;
  const MatrixXd Y = X * (U * alpha).transpose() + noise * L.transpose();
  return make_dataset(Y, X);
}

// Scaled-envelope truth in U coordinates: α = Λ⁻¹θη and Σ_{D|S} = Λ⁻¹(θΩθᵀ + θ0Ω0θ0ᵀ)Λ⁻¹ with a
// generic θ. With θ on a coordinate axis the scales are not identified.
Dataset scaled_synthetic(std::uint64_t seed, int n, MatrixXd& U) {
  std::mt19937_64 rng(seed);
  const int r = 7, k = 4;
  U = normal(rng, r, k);
  Eigen::HouseholderQR<MatrixXd> qr(normal(rng, k, k));
  const MatrixXd O = qr.householderQ();
  const MatrixXd th = O.leftCols(1), th0 = O.rightCols(k - 1);
  const MatrixXd li = (VectorXd(k) << 1.0, 2.5, 0.4, 1.7).finished().cwiseInverse().asDiagonal();
  const MatrixXd alpha = li * th * normal(rng, 1, 2) * 2.0;
  const MatrixXd sds = li * (0.3 * th * th.transpose() + 4.0 * th0 * th0.transpose()) * li;
  const MatrixXd X = normal(rng, n, 2);
  const MatrixXd ys = normal(rng, n, r - k);
  const MatrixXd yd = X * alpha.transpose() + normal(rng, n, k) * sds.llt().matrixL().transpose();
  const MatrixXd U0 = constraint_complement(U).matrix();
  return make_dataset(yd * U.transpose() + ys * U0.transpose(), X);
}

// Profile log-likelihood of model (1, X) -> Y at a given β, with β0 and Σ maximized out.
double profile_loglik(const Dataset& d, const MatrixXd& beta) {
  const VectorXd ybar = d.Y.colwise().mean().transpose();
  const VectorXd xbar = d.X.colwise().mean().transpose();
  const VectorXd beta0 = ybar - beta * xbar;
  MatrixXd res = d.Y - d.X * beta.transpose();
  res.rowwise() -= beta0.transpose();
  return gaussian_loglik(d, beta0, beta, res.transpose() * res / d.n());
}

}  // namespace

TEST(Unconstrained, MatchesLeastSquares) {
  std::mt19937_64 rng(1);
  const Dataset d = make_dataset(normal(rng, 50, 4), normal(rng, 50, 3));
  const EnvelopeFit f = fit_um(d);
  MatrixXd design(50, 4);
  design << VectorXd::Ones(50), d.X;
  const MatrixXd coef = design.colPivHouseholderQr().solve(d.Y);
  EXPECT_NEAR((f.beta - coef.bottomRows(3).transpose()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((f.beta0 - coef.row(0).transpose()).norm(), 0.0, 1e-12);
  const MatrixXd res = d.Y - design * coef;
  const MatrixXd sigma = res.transpose() * res / 50.0;
  EXPECT_NEAR((f.Sigma.matrix() - sigma).norm(), 0.0, 1e-12);
  const MatrixXd xc = d.X.rowwise() - d.X.colwise().mean();
  const MatrixXd sx = xc.transpose() * xc / 50.0;
  EXPECT_NEAR((f.avar_beta.matrix() - kron(sx.inverse(), sigma)).norm(), 0.0, 1e-10);
  EXPECT_EQ(f.n_params, 4 + 12 + 10);
}

// Table 1 of the dental analysis, avar(√n β̂) at ages 8, 10, 12, 14.
TEST(DentalTable, AllSixteenAvars) {
  const Dataset d = dental_dataset();
  const MatrixXd U = dental_U();
  const double expected[4][4] = {{15.53, 16.41, 25.42, 18.95},
                                 {15.29, 13.56, 22.79, 18.73},
                                 {13.97, 13.57, 15.00, 18.27},
                                 {5.88, 9.16, 13.16, 17.89}};
  const EnvelopeFit fits[4] = {fit_um(d), fit_em(d, 2), fit_cm(d, U, InterceptMode::model3),
                               fit_ecm(d, U, 1, InterceptMode::model3)};
  for (int e = 0; e < 4; ++e)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(avar_diag(fits[e])(j), expected[e][j], 0.05) << "row " << e << " age " << j;
}

TEST(DentalTable, BicSelectsReportedDimensions) {
  const Dataset d = dental_dataset();
  EXPECT_EQ(select_dimension(d, EstimatorKind::em).selected, 2);
  EXPECT_EQ(select_dimension(d, EstimatorKind::ecm, dental_U()).selected, 1);
}

TEST(Likelihood, FormulaMatchesDirectEvaluation) {
  MatrixXd U;
  const Dataset d = synthetic(2, 80, U);
  for (InterceptMode mode : {InterceptMode::model2, InterceptMode::model3}) {
    std::vector<EnvelopeFit> fits = {fit_cm(d, U, mode), fit_ecm(d, U, 1, mode), fit_ecm(d, U, 2, mode),
                                     fit_secm(d, U, 2, mode)};
    if (mode == InterceptMode::model3) {
      fits.push_back(fit_um(d));
      fits.push_back(fit_em(d, 3));
    }
    for (const auto& f : fits)
      EXPECT_NEAR(f.loglik, gaussian_loglik(d, f.beta0, f.beta, f.Sigma.matrix()), 1e-8 * std::abs(f.loglik))
          << to_string(f.kind) << " " << to_string(mode);
  }
}

// Closed form for the constrained MLE with a free intercept:
// α̂ = (UᵀS⁻¹U)⁻¹UᵀS⁻¹β̂_um with S the unconstrained residual covariance.
TEST(Constrained, MatchesGeneralizedLeastSquaresForm) {
  MatrixXd U;
  const Dataset d = synthetic(3, 60, U);
  const EnvelopeFit um = fit_um(d);
  const MatrixXd si = um.Sigma.matrix().inverse();
  const MatrixXd alpha = (U.transpose() * si * U).inverse() * U.transpose() * si * um.beta;
  const EnvelopeFit cm = fit_cm(d, U, InterceptMode::model3);
  EXPECT_NEAR((cm.alpha - alpha).norm(), 0.0, 1e-10);
  EXPECT_NEAR((cm.beta - U * alpha).norm(), 0.0, 1e-10);
}

// Tiny sample: the estimate is a local maximum of the profile likelihood.
TEST(Constrained, LocalMaximumOnTinySample) {
  std::mt19937_64 rng(4);
  const Dataset d = make_dataset(normal(rng, 6, 3), normal(rng, 6, 1));
  const MatrixXd U = normal(rng, 3, 2);
  const EnvelopeFit cm = fit_cm(d, U, InterceptMode::model3);
  const double best = profile_loglik(d, cm.beta);
  EXPECT_NEAR(best, cm.loglik, 1e-9 * std::abs(best));
  for (int i = 0; i < 2; ++i)
    for (double h : {-1e-3, 1e-3}) {
      MatrixXd a = cm.alpha;
      a(i, 0) += h;
      EXPECT_LT(profile_loglik(d, U * a), best);
    }
}

TEST(Nesting, FullDimensionsReduceToSimplerModels) {
  MatrixXd U;
  const Dataset d = synthetic(5, 90, U);
  const EnvelopeFit um = fit_um(d);
  std::mt19937_64 rng(6);
  const EnvelopeFit cm_full = fit_cm(d, normal(rng, 7, 7), InterceptMode::model3);
  EXPECT_NEAR((cm_full.beta - um.beta).norm(), 0.0, 1e-8);
  EXPECT_NEAR((cm_full.avar_beta.matrix() - um.avar_beta.matrix()).norm(), 0.0, 1e-8);
  const EnvelopeFit em_full = fit_em(d, 7);
  EXPECT_NEAR((em_full.beta - um.beta).norm(), 0.0, 1e-8);
  EXPECT_NEAR((em_full.avar_beta.matrix() - um.avar_beta.matrix()).norm(), 0.0, 1e-8);
  const EnvelopeFit cm = fit_cm(d, U, InterceptMode::model3);
  const EnvelopeFit ecm_full = fit_ecm(d, U, 4, InterceptMode::model3);
  EXPECT_NEAR((ecm_full.beta - cm.beta).norm(), 0.0, 1e-8);
  EXPECT_NEAR((ecm_full.avar_beta.matrix() - cm.avar_beta.matrix()).norm(), 0.0, 1e-7);
  EXPECT_NEAR(ecm_full.loglik, cm.loglik, 1e-8);
  EXPECT_EQ(fit_em(d, 0).beta.norm(), 0.0);
}

TEST(Invariance, EcmUnderOrthogonalReparameterizationOfU) {
  MatrixXd U;
  const Dataset d = synthetic(7, 120, U);
  std::mt19937_64 rng(8);
  Eigen::HouseholderQR<MatrixXd> qr(normal(rng, 4, 4));
  const MatrixXd O = qr.householderQ();
  for (int u = 1; u <= 3; ++u) {
    const EnvelopeFit a = fit_ecm(d, U, u, InterceptMode::model3);
    const EnvelopeFit b = fit_ecm(d, U * O, u, InterceptMode::model3);
    EXPECT_NEAR((a.beta - b.beta).norm(), 0.0, 1e-7 * (1.0 + a.beta.norm())) << "u = " << u;
    EXPECT_NEAR((a.avar_beta.matrix() - b.avar_beta.matrix()).norm(), 0.0, 1e-6 * a.avar_beta.matrix().norm());
    EXPECT_NEAR(a.loglik, b.loglik, 1e-8 * std::abs(a.loglik));
  }
}

TEST(Invariance, SecmUnderColumnScalingOfU) {
  MatrixXd U;
  const Dataset d = scaled_synthetic(1, 120, U);
  const VectorXd s = (VectorXd(4) << 1.0, 3.0, 0.2, 7.0).finished();
  const EnvelopeFit a = fit_secm(d, U, 1, InterceptMode::model3);
  const EnvelopeFit b = fit_secm(d, U * s.asDiagonal(), 1, InterceptMode::model3);
  EXPECT_NEAR(a.loglik, b.loglik, 1e-7 * std::abs(a.loglik));
  EXPECT_NEAR((a.beta - b.beta).norm(), 0.0, 1e-5 * (1.0 + a.beta.norm()));
}

TEST(Secm, JustIdentifiedCaseEqualsConstrained) {
  const Dataset d = dental_dataset();
  const EnvelopeFit s = fit_secm(d, dental_U(), 1, InterceptMode::model3);
  const EnvelopeFit c = fit_cm(d, dental_U(), InterceptMode::model3);
  EXPECT_NEAR(s.loglik, c.loglik, 1e-7);
  EXPECT_NEAR((s.beta - c.beta).norm(), 0.0, 1e-6);
}

TEST(Secm, RejectsUnidentifiableDimension) {
  MatrixXd U;
  const Dataset d = synthetic(10, 60, U);
  const Dataset one = make_dataset(d.Y, d.X.leftCols(1));
  try {
    fit_secm(one, U, 2, InterceptMode::model3);  // p(k - v) = 2 < k - 1 = 3
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unidentifiable);
  }
}

TEST(Envelope, NeedsMoreObservationsThanResponsesPlusPredictors) {
  std::mt19937_64 rng(11);
  const Dataset d = make_dataset(normal(rng, 6, 5), normal(rng, 6, 1));
  try {
    fit_em(d, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularDesign);
  }
}

// Sandwich with unit scales reproduces the closed-form envelope variance.
TEST(Avar, SandwichAgreesWithClosedForm) {
  std::mt19937_64 rng(12);
  for (int u = 1; u <= 3; ++u) {
    const int k = 5, p = 2;
    Eigen::HouseholderQR<MatrixXd> qr(normal(rng, k, k));
    const MatrixXd O = qr.householderQ();
    const MatrixXd G = O.leftCols(u), G0 = O.rightCols(k - u);
    MatrixXd a = normal(rng, u, u), b = normal(rng, k - u, k - u), c = normal(rng, p, p);
    const MatrixXd om = a * a.transpose() + MatrixXd::Identity(u, u);
    const MatrixXd om0 = b * b.transpose() + MatrixXd::Identity(k - u, k - u);
    const MatrixXd sx = c * c.transpose() + MatrixXd::Identity(p, p);
    const MatrixXd eta = normal(rng, u, p);
    const MatrixXd closed = envelope_avar(sx, G, G0, om, om0, eta);
    const MatrixXd sandwich = scaled_envelope_avar(sx, VectorXd::Ones(k), G, G0, om, om0, eta, false);
    EXPECT_NEAR((closed - sandwich).norm(), 0.0, 1e-8 * closed.norm()) << "u = " << u;
  }
}

// The ordering is a statement about one parameter value: the envelope avar sits below the
// larger model's avar evaluated at the same Σ. Plug-ins from separate fits need not be ordered
// when u is below the true dimension.
TEST(Avar, LoewnerOrderingAtCommonParameters) {
  MatrixXd U;
  const Dataset d = synthetic(13, 150, U);
  const MatrixXd xc = d.X.rowwise() - d.X.colwise().mean();
  const MatrixXd sx_inv = (xc.transpose() * xc / static_cast<double>(d.n())).inverse();
  const EnvelopeFit um = fit_um(d);
  EXPECT_NEAR((um.avar_beta.matrix() - kron(sx_inv, um.Sigma.matrix())).norm(), 0.0, 1e-9 * um.avar_beta.matrix().norm());
  const EnvelopeFit cm = fit_cm(d, U, InterceptMode::model3);
  for (int u = 0; u <= 4; ++u) {
    const EnvelopeFit ecm = fit_ecm(d, U, u, InterceptMode::model3);
    const MatrixXd cm_at_ecm = kron(sx_inv, ecm.Sigma_DS.matrix());
    EXPECT_TRUE(is_psd(cm_at_ecm - ecm.avar_alpha.matrix(), 1e-8)) << "u = " << u;
  }
  EXPECT_NEAR((cm.avar_alpha.matrix() - kron(sx_inv, cm.Sigma_DS.matrix())).norm(), 0.0,
              1e-9 * cm.avar_alpha.matrix().norm());
  for (int u = 0; u <= 7; ++u) {
    const EnvelopeFit em = fit_em(d, u);
    EXPECT_TRUE(is_psd(kron(sx_inv, em.Sigma.matrix()) - em.avar_beta.matrix(), 1e-8)) << "u = " << u;
  }
  // On the dental data the separately fitted plug-ins are ordered too.
  const Dataset dental = dental_dataset();
  EXPECT_TRUE(is_psd(fit_cm(dental, dental_U(), InterceptMode::model3).avar_beta.matrix() -
                         fit_ecm(dental, dental_U(), 1, InterceptMode::model3).avar_beta.matrix(),
                     1e-8));
}

TEST(Intercepts, ModelTwoKeepsInterceptInSpanOfU) {
  MatrixXd U;
  const Dataset d = synthetic(14, 70, U);
  const EnvelopeFit f = fit_cm(d, U, InterceptMode::model2);
  const MatrixXd P = U * (U.transpose() * U).inverse() * U.transpose();
  EXPECT_NEAR((P * f.beta0 - f.beta0).norm(), 0.0, 1e-10);
  EXPECT_EQ(f.n_params, n_params(EstimatorKind::cm, 7, 2, 4, 4, InterceptMode::model2));
  EXPECT_EQ(n_params(EstimatorKind::cm, 7, 2, 4, 4, InterceptMode::model3) -
                n_params(EstimatorKind::cm, 7, 2, 4, 4, InterceptMode::model2),
            3);
}
