#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "envcore/errors.hpp"
#include "envcore/linalg.hpp"

using namespace envcore;

namespace {

MatrixXd random_spd(std::mt19937_64& rng, int n, double ridge = 0.5) {
  std::normal_distribution<double> nd;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
  MatrixXd s = a * a.transpose() / n;
  s.diagonal().array() += ridge;
  return 0.5 * (s + s.transpose());
}

MatrixXd random_orthonormal(std::mt19937_64& rng, int r, int u) {
  std::normal_distribution<double> nd;
  MatrixXd a(r, u);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < u; ++j) a(i, j) = nd(rng);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  return qr.householderQ() * MatrixXd::Identity(r, u);
}

SymMatrix sym(const MatrixXd& m) { return SymMatrix::symmetrize(m); }

}  // namespace

TEST(SymMatrix, RejectsAsymmetricInput) {
  MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  EXPECT_THROW(SymMatrix{m}, Error);
}

TEST(SymMatrix, LogDetOfKnownMatrix) {
  MatrixXd m(2, 2);
  m << 2, 1, 1, 2;
  EXPECT_NEAR(SymMatrix(m).log_det(), std::log(3.0), 1e-14);
  MatrixXd inv = SymMatrix(m).inverse().matrix();
  EXPECT_NEAR((inv * m - MatrixXd::Identity(2, 2)).norm(), 0.0, 1e-14);
}

TEST(SymMatrix, PositiveDefinitenessRule) {
  MatrixXd m = MatrixXd::Identity(3, 3);
  m(2, 2) = 1e-17;
  EXPECT_FALSE(SymMatrix(m).is_positive_definite());
  EXPECT_THROW(SymMatrix(m).log_det(), Error);
  m(2, 2) = 1e-10;
  EXPECT_TRUE(SymMatrix(m).is_positive_definite());
}

TEST(EnvelopeObjective, DiagonalClosedForm) {
  // G = e1 picks the (0,0) entries: log 2 + log 5.
  const MatrixXd m1 = VectorXd::LinSpaced(3, 2, 4).asDiagonal();
  const MatrixXd m2 = VectorXd::LinSpaced(3, 5, 7).asDiagonal();
  EXPECT_NEAR(envelope_objective(MatrixXd::Identity(3, 1), m1, m2), std::log(10.0), 1e-14);
  EXPECT_EQ(envelope_objective(MatrixXd(3, 0), m1, m2), 0.0);
}

TEST(EnvelopeObjective, InvariantUnderRotationOfColumns) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd m1 = random_spd(rng, 6), m2 = random_spd(rng, 6);
    const MatrixXd g = random_orthonormal(rng, 6, 3);
    const MatrixXd o = random_orthonormal(rng, 3, 3);
    EXPECT_NEAR(envelope_objective(g, m1, m2), envelope_objective(g * o, m1, m2), 1e-11);
  }
}

TEST(EnvelopeObjective, DimensionMismatchNamesShapes) {
  try {
    envelope_objective(MatrixXd::Identity(3, 1), MatrixXd::Identity(4, 4), MatrixXd::Identity(3, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("4x4"), std::string::npos);
  }
}

TEST(Minimizer, EverySweepDescends) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int r = 8, u = 1 + trial % 6;
    const SymMatrix m1 = sym(random_spd(rng, r)), m2 = sym(random_spd(rng, r));
    const EnvelopeOptimum opt = refine_envelope_basis(m1, m2, random_orthonormal(rng, r, u));
    ASSERT_GE(opt.trace.size(), 2u);
    for (std::size_t i = 1; i < opt.trace.size(); ++i) EXPECT_LE(opt.trace[i], opt.trace[i - 1] + 1e-12);
  }
}

TEST(Minimizer, MultiStartNeverWorseThanRandomRefinements) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    const int r = 7, u = 2 + trial % 3;
    const SymMatrix m1 = sym(random_spd(rng, r)), m2 = sym(random_spd(rng, r));
    const double best = minimize_envelope_objective(m1, m2, u).objective;
    for (int s = 0; s < 5; ++s) {
      const double f = refine_envelope_basis(m1, m2, random_orthonormal(rng, r, u)).objective;
      EXPECT_LE(best, f + 1e-7);
    }
  }
}

// Brute-force oracle on the circle: G = (cos θ, sin θ).
TEST(Minimizer, AgreesWithGridAtR2) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd m1 = random_spd(rng, 2), m2 = random_spd(rng, 2);
    double grid = INFINITY;
    const int steps = 200000;
    for (int i = 0; i < steps; ++i) {
      const double t = std::numbers::pi * i / steps;
      MatrixXd g(2, 1);
      g << std::cos(t), std::sin(t);
      grid = std::min(grid, envelope_objective(g, m1, m2));
    }
    const double opt = minimize_envelope_objective(sym(m1), sym(m2), 1).objective;
    EXPECT_LE(opt, grid + 1e-12);
    EXPECT_NEAR(opt, grid, 1e-8);
  }
}

// Spherical grid at r = 3 for u = 1, and via normals for u = 2.
TEST(Minimizer, AgreesWithGridAtR3) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 4; ++trial) {
    const MatrixXd m1 = random_spd(rng, 3), m2 = random_spd(rng, 3);
    double grid1 = INFINITY, grid2 = INFINITY;
    const int nt = 300, np = 600;
    for (int i = 0; i <= nt; ++i) {
      const double th = std::numbers::pi * i / nt;
      for (int j = 0; j < np; ++j) {
        const double ph = 2.0 * std::numbers::pi * j / np;
        const Eigen::Vector3d w(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
        grid1 = std::min(grid1, envelope_objective(MatrixXd(w), m1, m2));
        Eigen::HouseholderQR<MatrixXd> qr{MatrixXd(w)};
        const MatrixXd q = qr.householderQ();
        grid2 = std::min(grid2, envelope_objective(q.rightCols(2), m1, m2));
      }
    }
    const double opt1 = minimize_envelope_objective(sym(m1), sym(m2), 1).objective;
    const double opt2 = minimize_envelope_objective(sym(m1), sym(m2), 2).objective;
    EXPECT_LE(opt1, grid1 + 1e-12);
    EXPECT_LE(opt2, grid2 + 1e-12);
    EXPECT_NEAR(opt1, grid1, 2e-3);
    EXPECT_NEAR(opt2, grid2, 2e-3);
  }
}

// Population oracle: M1 = Σ, M2 = (Σ + ΓηηᵀΓᵀ)⁻¹ is minimized at span(Γ).
TEST(Minimizer, RecoversPopulationEnvelope) {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> nd;
  for (int u = 1; u <= 4; ++u) {
    const int r = 9;
    const MatrixXd o = random_orthonormal(rng, r, r);
    const MatrixXd g = o.leftCols(u), g0 = o.rightCols(r - u);
    MatrixXd eta(u, 3);
    for (int i = 0; i < u; ++i)
      for (int j = 0; j < 3; ++j) eta(i, j) = nd(rng);
    const MatrixXd sigma = g * random_spd(rng, u) * g.transpose() + g0 * (5.0 * random_spd(rng, r - u)) * g0.transpose();
    const MatrixXd sy = sigma + g * eta * eta.transpose() * g.transpose();
    const EnvelopeOptimum opt = minimize_envelope_objective(sym(sigma), sym(sy.inverse()), u);
    EXPECT_LT(subspace_distance(opt.basis, SemiOrthBasis::of_span(g)), 1e-7) << "u = " << u;
  }
}

TEST(Minimizer, BoundaryDimensionsShortCircuit) {
  std::mt19937_64 rng(31);
  const MatrixXd m1 = random_spd(rng, 4), m2 = random_spd(rng, 4);
  const EnvelopeOptimum zero = minimize_envelope_objective(sym(m1), sym(m2), 0);
  EXPECT_EQ(zero.basis.cols(), 0);
  EXPECT_EQ(zero.objective, 0.0);
  const EnvelopeOptimum full = minimize_envelope_objective(sym(m1), sym(m2), 4);
  EXPECT_NEAR(full.objective, std::log(m1.determinant()) + std::log(m2.determinant()), 1e-12);
  EXPECT_THROW(minimize_envelope_objective(sym(m1), sym(m2), 5), Error);
}

TEST(Minimizer, NonPositiveDefiniteInputNeedsJitter) {
  MatrixXd m1 = MatrixXd::Identity(3, 3);
  m1(2, 2) = 0.0;
  const MatrixXd m2 = MatrixXd::Identity(3, 3);
  try {
    minimize_envelope_objective(sym(m1), sym(m2), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveDefinite);
  }
  OptimizerOptions o;
  o.jitter = true;
  const EnvelopeOptimum opt = minimize_envelope_objective(sym(m1), sym(m2), 1, o);
  EXPECT_TRUE(opt.jittered);
}

TEST(Minimizer, SweepCapRaisesWithBestIterate) {
  std::mt19937_64 rng(37);
  const SymMatrix m1 = sym(random_spd(rng, 10)), m2 = sym(random_spd(rng, 10));
  OptimizerOptions o;
  o.max_sweeps = 1;
  o.tol = 0.0;
  try {
    refine_envelope_basis(m1, m2, random_orthonormal(rng, 10, 4), o);
    FAIL();
  } catch (const NoConvergenceError& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
    EXPECT_EQ(e.best_iterate().cols(), 4);
    EXPECT_NEAR(envelope_objective(e.best_iterate(), m1.matrix(), m2.matrix()), e.best_objective(), 1e-9);
  }
}

TEST(Canonicalize, SignsOrderAndIdempotence) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd g = random_orthonormal(rng, 6, 3);
    const MatrixXd c = canonicalize_columns(g);
    EXPECT_NEAR((c * c.transpose() - g * g.transpose()).norm(), 0.0, 1e-13);
    for (int j = 0; j < 3; ++j) {
      Eigen::Index idx;
      c.col(j).cwiseAbs().maxCoeff(&idx);
      EXPECT_GT(c(idx, j), 0.0);
    }
    EXPECT_EQ(canonicalize_columns(c), c);
    // Sign flips and permutations of the input give the same canonical form.
    MatrixXd h(6, 3);
    h << -g.col(2), g.col(0), -g.col(1);
    EXPECT_NEAR((canonicalize_columns(h) - c).norm(), 0.0, 1e-13);
  }
}

TEST(Bases, CompletionAndDistance) {
  std::mt19937_64 rng(43);
  const SemiOrthBasis b(random_orthonormal(rng, 7, 3));
  const SemiOrthBasis c = complete_basis(b);
  EXPECT_EQ(c.cols(), 4);
  EXPECT_NEAR((b.matrix().transpose() * c.matrix()).norm(), 0.0, 1e-13);
  EXPECT_NEAR((b.projector() + c.projector() - MatrixXd::Identity(7, 7)).norm(), 0.0, 1e-13);
  EXPECT_NEAR(subspace_distance(b, b), 0.0, 1e-14);
  const SemiOrthBasis e1 = SemiOrthBasis::leading_identity(2, 1);
  const SemiOrthBasis e2 = SemiOrthBasis(MatrixXd(Eigen::Vector2d(0.0, 1.0)));
  EXPECT_NEAR(subspace_distance(e1, e2), 1.0, 1e-14);
  MatrixXd bad(3, 2);
  bad << 1, 2, 2, 4, 3, 6;
  EXPECT_THROW(SemiOrthBasis::of_span(bad), Error);
}

TEST(Helpers, VecOperatorIdentities) {
  std::mt19937_64 rng(47);
  std::normal_distribution<double> nd;
  MatrixXd a(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = nd(rng);
  EXPECT_EQ(commutation_matrix(3, 4) * vec(a), vec(a.transpose()));
  const MatrixXd s = random_spd(rng, 4);
  EXPECT_NEAR((duplication_matrix(4) * vech(s) - vec(s)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((elimination_matrix(4) * vec(s) - vech(s)).norm(), 0.0, 1e-15);
  MatrixXd b(2, 2);
  b << 1, 2, 3, 4;
  const MatrixXd k = kron(b, MatrixXd::Identity(2, 2));
  EXPECT_EQ(k(2, 0), 3.0);
  EXPECT_EQ(k(3, 3), 4.0);
  EXPECT_EQ(k(0, 1), 0.0);
}

TEST(Helpers, PseudoInverseOfSingularMatrix) {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a(0, 0) = 2.0;
  a(1, 1) = 4.0;
  const MatrixXd p = pinv_sym(a);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p(1, 1), 0.25, 1e-15);
  EXPECT_EQ(p(2, 2), 0.0);
  EXPECT_NEAR((a * p * a - a).norm(), 0.0, 1e-14);
}
