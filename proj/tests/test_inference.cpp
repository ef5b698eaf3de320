#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "envcore/errors.hpp"
#include "envcore/fixtures.hpp"
#include "envcore/inference.hpp"
#include "envcore/simulation.hpp"

using namespace envcore;

namespace {

MatrixXd dental_U() {
  MatrixXd U(4, 2);
  U.col(0).setOnes();
  U.col(1) = dental_ages();
  return U;
}

MatrixXd normal(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> nd;
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

// Three groups coded by two indicators; group means differ along one direction of U.
Dataset three_groups(std::uint64_t seed, int per_group, MatrixXd& U) {
  std::mt19937_64 rng(seed);
  const int r = 6, n = 3 * per_group;
  U = normal(rng, r, 3);
  MatrixXd X = MatrixXd::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    if (i / per_group == 1) X(i, 0) = 1.0;
    if (i / per_group == 2) X(i, 1) = 1.0;
  }
  MatrixXd alpha(3, 2);
  alpha << 1.0, 2.5, 0.0, 0.0, 0.0, 0.0;
  MatrixXd L = normal(rng, r, r) * 0.3;
  L.diagonal().array() += 1.0;
  return make_dataset(X * (U * alpha).transpose() + normal(rng, n, r) * L.transpose(), X);
}

}  // namespace

TEST(Distributions, KnownQuantiles) {
  EXPECT_NEAR(chi2_upper_tail(3.841458820694124, 1), 0.05, 1e-12);
  EXPECT_NEAR(chi2_upper_tail(5.991464547107979, 2), 0.05, 1e-12);
  EXPECT_EQ(chi2_upper_tail(0.0, 3), 1.0);
  EXPECT_NEAR(normal_two_sided(1.959963984540054), 0.05, 1e-12);
  EXPECT_NEAR(normal_two_sided(0.0), 1.0, 1e-15);
}

TEST(RowTest, DentalStatisticIsTwiceTheLikelihoodGap) {
  const Dataset d = dental_dataset();
  const TestResult t = test_rows(d, dental_U(), 1, 1, InterceptMode::model3);
  EXPECT_EQ(t.df, 1);
  EXPECT_NEAR(t.statistic, 2.0 * (t.loglik_alt - t.loglik_null), 1e-10);
  EXPECT_NEAR(t.p_value, chi2_upper_tail(t.statistic, 1), 1e-15);
  EXPECT_GE(t.statistic, 0.0);
  EXPECT_NEAR(t.loglik_alt, fit_ecm(d, dental_U(), 1, InterceptMode::model3).loglik, 1e-10);
}

// Null likelihood: the ecm objective restricted to G = (G1; 0), found here by a grid on the circle.
TEST(RowTest, NullLikelihoodMatchesRestrictedGrid) {
  ScenarioSpec spec = default_spec(ScenarioId::null_test, 3);
  spec.n = 400;
  const GeneratedData g = generate_scenario(spec, 0);
  const TestResult t = test_rows(g.data, g.truth.U, 1, 1, InterceptMode::model3);
  const TransformedData tr = transform_responses(g.data, g.truth.U);
  const MomentSet m = compute_moments(tr, g.data.X, InterceptMode::model3);
  const MatrixXd sinv = m.S_D_given_S.inverse();
  double best = INFINITY;
  const int steps = 200000;
  for (int i = 0; i < steps; ++i) {
    const double a = std::numbers::pi * i / steps;
    MatrixXd G = MatrixXd::Zero(3, 1);
    G(0, 0) = std::cos(a);
    G(1, 0) = std::sin(a);
    best = std::min(best, envelope_objective(G, m.S_D_given_XS, sinv));
  }
  const int n = spec.n, r = spec.r;
  const double c = n * tr.logdetW - 0.5 * n * r * (1.0 + std::log(2.0 * std::numbers::pi));
  const double ll = c - 0.5 * n * (std::log(m.S_S.determinant()) + std::log(m.S_D_given_S.determinant()) + best);
  EXPECT_NEAR(t.loglik_null, ll, 1e-6);
}

TEST(RowTest, PartitionBounds) {
  try {
    test_rows(dental_dataset(), dental_U(), 1, 2, InterceptMode::model3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidPartition);
  }
}

TEST(RowTest, PowerAgainstNonzeroRow) {
  ScenarioSpec spec = default_spec(ScenarioId::null_test, 5);
  spec.row_signal = 3.0;
  const GeneratedData g = generate_scenario(spec, 0);
  const TestResult t = test_rows(g.data, g.truth.U, 1, 1, InterceptMode::model3);
  EXPECT_LT(t.p_value, 1e-6);
}

TEST(Contrast, FullContrastReproducesEcm) {
  const Dataset d = dental_dataset();
  const MatrixXd c1 = MatrixXd::Ones(1, 1);
  const ContrastFit cf = fit_contrast(d, dental_U(), c1, 1, InterceptMode::model3);
  const EnvelopeFit ecm = fit_ecm(d, dental_U(), 1, InterceptMode::model3);
  EXPECT_NEAR((cf.alpha1 - ecm.alpha).norm(), 0.0, 1e-9);
  EXPECT_NEAR((cf.avar_alpha1.matrix() - ecm.avar_alpha.matrix()).norm(), 0.0, 1e-8);
  EXPECT_NEAR((cf.avar_Ualpha1.matrix() - ecm.avar_beta.matrix()).norm(), 0.0, 1e-8);
}

TEST(Contrast, TwoGroupDifferenceOrdering) {
  MatrixXd U;
  const Dataset d = three_groups(21, 60, U);
  MatrixXd c1(2, 1);
  c1 << 1.0, -1.0;
  const EnvelopeFit cm = fit_cm(d, U, InterceptMode::model3);
  for (int u1 = 0; u1 <= 3; ++u1) {
    const ContrastFit cf = fit_contrast(d, U, c1, u1, InterceptMode::model3);
    EXPECT_NEAR((cf.alpha1_cm - cm.alpha * c1).norm(), 0.0, 1e-10);
    // Loewner order against the constrained-model avar at the same Σ_{D|(Z2,S)} structure.
    MatrixXd sigma = MatrixXd::Zero(3, 3);
    if (u1 > 0) sigma += cf.basis * cf.Omega.matrix() * cf.basis.transpose();
    if (u1 < 3) {
      const MatrixXd b0 = u1 > 0 ? complete_basis(SemiOrthBasis(cf.basis)).matrix() : MatrixXd::Identity(3, 3);
      sigma += b0 * cf.Omega0.matrix() * b0.transpose();
    }
    const MatrixXd cm_at_env = kron(cf.S_Z1_given_Z2.matrix().inverse(), sigma);
    EXPECT_TRUE(is_psd(cm_at_env - cf.avar_alpha1.matrix(), 1e-8)) << "u1 = " << u1;
    if (u1 == 3) {
      EXPECT_NEAR((cf.alpha1 - cf.alpha1_cm).norm(), 0.0, 1e-9);
      EXPECT_NEAR((cf.avar_alpha1.matrix() - cf.avar_alpha1_cm.matrix()).norm(), 0.0, 1e-8);
    }
  }
  // Contrast variance of the constrained fit: c1ᵀ avar(α̂) c1 blocks.
  const ContrastFit cf = fit_contrast(d, U, c1, 3, InterceptMode::model3);
  const MatrixXd lifted = kron(c1.transpose(), MatrixXd::Identity(3, 3)) * cm.avar_alpha.matrix() *
                          kron(c1, MatrixXd::Identity(3, 3));
  EXPECT_NEAR((cf.avar_alpha1_cm.matrix() - lifted).norm(), 0.0, 1e-8);
}

TEST(Contrast, RankDeficientContrast) {
  MatrixXd U;
  const Dataset d = three_groups(22, 20, U);
  MatrixXd c1(2, 2);
  c1 << 1, 2, 1, 2;
  try {
    fit_contrast(d, U, c1, 1, InterceptMode::model3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficientContrast);
  }
}

TEST(Profile, MeanAtNewPredictor) {
  const Dataset d = dental_dataset();
  const MatrixXd U = dental_U();
  const EnvelopeFit cm = fit_cm(d, U, InterceptMode::model3);
  const MatrixXd P = U * (U.transpose() * U).inverse() * U.transpose();
  const VectorXd boys = VectorXd::Ones(1);
  const ProfileEstimate pe = estimate_profile(d, U, boys, 2);
  EXPECT_NEAR((pe.mean_cm - P * (cm.beta0 + cm.beta * boys)).norm(), 0.0, 1e-10);
  EXPECT_NEAR((pe.mean - pe.mean_cm).norm(), 0.0, 1e-9);  // u1 = k
  const ProfileEstimate env = estimate_profile(d, U, boys, 1);
  EXPECT_TRUE(is_psd(env.avar_cm.matrix() - env.avar.matrix(), 1e-8));
  const VectorXd center = d.X.colwise().mean().transpose();
  const ProfileEstimate mid = estimate_profile(d, U, center, 1);
  EXPECT_NEAR((mid.avar.matrix() - mid.avar_cm.matrix()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((mid.mean - P * d.Y.colwise().mean().transpose()).norm(), 0.0, 1e-12);
}

TEST(Wald, PValuesFromAvarDiagonal) {
  const EnvelopeFit f = fit_ecm(dental_dataset(), dental_U(), 1, InterceptMode::model3);
  const MatrixXd pv = wald_pvalues(f);
  for (int i = 0; i < 4; ++i) {
    const double se = std::sqrt(f.avar_beta(i, i) / f.n);
    EXPECT_NEAR(pv(i, 0), std::erfc(std::abs(f.beta(i, 0) / se) / std::sqrt(2.0)), 1e-15);
  }
}

TEST(Selection, SkipsNothingOnCleanData) {
  const DimensionSelection s = select_dimension(dental_dataset(), EstimatorKind::em);
  EXPECT_EQ(s.trace.size(), 5u);
  EXPECT_TRUE(s.warnings.empty());
  for (const auto& c : s.trace) EXPECT_TRUE(c.ok);
  for (const auto& c : s.trace) EXPECT_GE(c.bic, s.trace[s.selected].bic);
}
