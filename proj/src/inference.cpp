#include "envcore/inference.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>

#include "envcore/errors.hpp"

namespace envcore {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

SymMatrix sym(const MatrixXd& m) { return SymMatrix::symmetrize(m); }

MatrixXd lift(const MatrixXd& a, const MatrixXd& U, int p) {
  const MatrixXd iu = kron(MatrixXd::Identity(p, p), U);
  return iu * a * iu.transpose();
}

double likelihood_constant(const TransformedData& t, int n) {
  return n * t.logdetW - 0.5 * n * t.r() * (1.0 + kLog2Pi);
}

double marginal_logdet(const MomentSet& m) {
  try {
    return logdet_pd(m.marginal_S(), "marginal Y_S moment");
  } catch (const Error&) {
    throw Error(ErrorCode::SingularMoment,
                std::string(m.mode == InterceptMode::model2 ? "T_S" : "S_S") + " is singular");
  }
}

}  // namespace

const char* to_string(TestKind kind) {
  switch (kind) {
    case TestKind::row_test: return "row_test";
    case TestKind::wald: return "wald";
    case TestKind::contrast: return "contrast";
  }
  return "?";
}

double chi2_upper_tail(double x, int df) {
  if (df <= 0) return 1.0;
  if (!(x > 0.0)) return 1.0;
  const boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

DimensionSelection select_dimension(const Dataset& data, EstimatorKind kind, const std::optional<MatrixXd>& U,
                                    InterceptMode mode, const FitOptions& opts) {
  DimensionSelection sel;
  sel.kind = kind;
  int lo = 0, hi = 0;
  switch (kind) {
    case EstimatorKind::em:
      hi = data.r();
      break;
    case EstimatorKind::ecm:
    case EstimatorKind::secm:
      if (!U) throw Error(ErrorCode::InvalidSpec, "a constraint matrix U is required for ecm and secm");
      hi = static_cast<int>(U->cols());
      lo = kind == EstimatorKind::secm ? 1 : 0;
      break;
    default:
      throw Error(ErrorCode::InvalidSpec, "dimension selection applies to em, ecm and secm only");
  }
  for (int d = lo; d <= hi; ++d) {
    if (kind == EstimatorKind::secm && data.p() * (hi - d) < hi - 1) continue;
    DimensionCandidate c;
    c.dim = d;
    try {
      EnvelopeFit f = kind == EstimatorKind::em    ? fit_em(data, d, opts)
                      : kind == EstimatorKind::ecm ? fit_ecm(data, *U, d, mode, opts)
                                                   : fit_secm(data, *U, d, mode, opts);
      c.ok = true;
      c.loglik = f.loglik;
      c.n_params = f.n_params;
      c.bic = f.bic();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoConvergence && e.code() != ErrorCode::NonPositiveDefinite &&
          e.code() != ErrorCode::SingularMoment)
        throw;
      c.error = e.what();
      sel.warnings.push_back("dimension " + std::to_string(d) + " skipped: " + e.what());
    }
    sel.trace.push_back(c);
  }
  for (const auto& c : sel.trace) {
    if (!c.ok) continue;
    if (sel.selected < 0) {
      sel.selected = c.dim;
      continue;
    }
    for (const auto& b : sel.trace)
      if (b.dim == sel.selected && c.bic < b.bic) {
        sel.selected = c.dim;
        break;
      }
  }
  if (sel.selected < 0) throw Error(ErrorCode::NoConvergence, "no candidate dimension could be fitted");
  return sel;
}

TestResult test_rows(const Dataset& data, const MatrixXd& U, int u, int k2, InterceptMode mode,
                     const FitOptions& opts) {
  validate_dataset(data);
  const int k = static_cast<int>(U.cols());
  if (u < 0 || u > k) throw Error(ErrorCode::InvalidPartition, "u must lie in [0, k]");
  if (k2 < 1 || k2 > k - u)
    throw Error(ErrorCode::InvalidPartition, "k2 = " + std::to_string(k2) + " outside [1, k - u] = [1, " +
                                                 std::to_string(k - u) + "]");
  const TransformedData t = transform_responses(data, U);
  const MomentSet m = compute_moments(t, data.X, mode);
  const int n = data.n();
  const int k1 = k - k2;

  TestResult res;
  res.kind = TestKind::row_test;
  res.df = u * k2;
  res.loglik_alt = fit_ecm(data, U, u, mode, opts).loglik;

  const MatrixXd& sds = m.S_D_given_S;
  const MatrixXd s22 = sds.bottomRightCorner(k2, k2);
  const MatrixXd s12 = sds.topRightCorner(k1, k2);
  MatrixXd s1_given = sds.topLeftCorner(k1, k1) - s12 * inverse_pd(s22, "S_{D2|S}") * s12.transpose();
  s1_given = 0.5 * (s1_given + s1_given.transpose()).eval();
  const MatrixXd m1 = m.S_D_given_XS.topLeftCorner(k1, k1);
  double f1 = 0.0;
  if (u == k1) {
    f1 = logdet_pd(m1, "S_{D1|(X,S)}") - logdet_pd(s1_given, "S_{D1|(D2,S)}");
  } else if (u > 0) {
    f1 = minimize_envelope_objective(sym(m1), sym(inverse_pd(s1_given, "S_{D1|(D2,S)}")), u, opts.optimizer)
             .objective;
  }
  res.loglik_null = likelihood_constant(t, n) -
                    0.5 * n *
                        (marginal_logdet(m) + logdet_pd(s22, "S_{D2|S}") + logdet_pd(s1_given, "S_{D1|(D2,S)}") + f1);
  const double raw = 2.0 * (res.loglik_alt - res.loglik_null);
  res.clipped = raw < 0.0;
  res.statistic = res.clipped ? 0.0 : raw;
  res.p_value = chi2_upper_tail(res.statistic, res.df);
  return res;
}

ContrastFit fit_contrast(const Dataset& data, const MatrixXd& U, const MatrixXd& c1, int u1, InterceptMode mode,
                         const FitOptions& opts) {
  validate_dataset(data);
  const int p = data.p();
  if (c1.rows() != p)
    throw Error(ErrorCode::DimensionMismatch, "contrast has " + std::to_string(c1.rows()) + " rows but p = " +
                                                  std::to_string(p));
  const int p1 = static_cast<int>(c1.cols());
  if (p1 < 1 || p1 > p) throw Error(ErrorCode::RankDeficientContrast, "contrast must have 1..p columns");
  SemiOrthBasis span;
  try {
    span = SemiOrthBasis::of_span(c1);
  } catch (const Error&) {
    throw Error(ErrorCode::RankDeficientContrast, "contrast matrix is rank deficient");
  }
  const TransformedData t = transform_responses(data, U);
  const int k = t.k();
  if (u1 < 0 || u1 > k) throw Error(ErrorCode::InvalidSpec, "u1 must lie in [0, k]");
  const MomentSet m = compute_moments(t, data.X, mode);

  ContrastFit cf;
  cf.c1 = c1;
  cf.c2 = complete_basis(span).matrix();
  cf.p1 = p1;
  cf.p2 = p - p1;
  cf.u1 = u1;
  MatrixXd C(p, p);
  C << c1, cf.c2;
  const MatrixXd Z = data.X * C.inverse().transpose();
  const MatrixXd Z1 = Z.leftCols(p1);
  const MatrixXd Z2 = Z.rightCols(cf.p2);
  MatrixXd K(data.n(), cf.p2 + t.Y_S.cols());
  K << Z2, t.Y_S;

  const MatrixXd& m1 = m.S_D_given_XS;
  const MatrixXd m2 = residual_covariance(t.Y_D, K, "S_K");
  const EnvelopeOptimum opt = minimize_envelope_objective(sym(m1), sym(inverse_pd(m2, "S_{D|K}")), u1, opts.optimizer);
  const MatrixXd Phi = opt.basis.matrix();
  const MatrixXd Phi0 = complete_basis(opt.basis).matrix();
  cf.alpha1_cm = constrained_alpha(m) * c1;
  const MatrixXd eta = Phi.transpose() * cf.alpha1_cm;
  cf.alpha1 = Phi * eta;
  cf.basis = Phi;
  cf.Omega = sym(Phi.transpose() * m1 * Phi);
  cf.Omega0 = sym(Phi0.transpose() * m2 * Phi0);
  cf.S_Z1_given_Z2 = sym(residual_covariance(Z1, Z2, "S_{Z2}"));
  cf.avar_alpha1 = sym(envelope_avar(cf.S_Z1_given_Z2.matrix(), Phi, Phi0, cf.Omega.matrix(), cf.Omega0.matrix(),
                                     eta, opts.pinv_cutoff));
  cf.avar_Ualpha1 = sym(lift(cf.avar_alpha1.matrix(), U, p1));
  cf.avar_alpha1_cm = sym(kron(inverse_pd(cf.S_Z1_given_Z2.matrix(), "S_{Z1|Z2}"), m1));
  cf.avar_Ualpha1_cm = sym(lift(cf.avar_alpha1_cm.matrix(), U, p1));
  cf.objective = opt.objective;
  cf.loglik = likelihood_constant(t, data.n()) -
              0.5 * data.n() * (marginal_logdet(m) + logdet_pd(m2, "S_{D|K}") + opt.objective);
  return cf;
}

ProfileEstimate estimate_profile(const Dataset& data, const MatrixXd& U, const VectorXd& x_new, int u1,
                                 const FitOptions& opts) {
  validate_dataset(data);
  if (x_new.size() != data.p())
    throw Error(ErrorCode::DimensionMismatch, "x_new has length " + std::to_string(x_new.size()) +
                                                  " but p = " + std::to_string(data.p()));
  const VectorXd x_bar = data.X.colwise().mean().transpose();
  const VectorXd y_bar = data.Y.colwise().mean().transpose();
  const VectorXd c1 = x_new - x_bar;
  const MatrixXd PU = SemiOrthBasis::of_span(U).projector();
  const EnvelopeFit cm = fit_cm(data, U, InterceptMode::model3);
  const MatrixXd base = PU * cm.Sigma.matrix() * PU;

  ProfileEstimate pe;
  pe.x_new = x_new;
  pe.mean = PU * y_bar;
  pe.mean_cm = pe.mean;
  if (c1.norm() <= 1e-12 * (1.0 + x_bar.norm())) {
    pe.avar = sym(base);
    pe.avar_cm = sym(base);
    return pe;
  }
  const ContrastFit cf = fit_contrast(data, U, c1, u1, InterceptMode::model3, opts);
  pe.mean += U * cf.alpha1;
  pe.mean_cm += U * cf.alpha1_cm;
  pe.avar = sym(base + cf.avar_Ualpha1.matrix());
  pe.avar_cm = sym(base + cf.avar_Ualpha1_cm.matrix());
  return pe;
}

MatrixXd wald_pvalues(const EnvelopeFit& fit) {
  const int r = static_cast<int>(fit.beta.rows());
  const int p = static_cast<int>(fit.beta.cols());
  if (fit.avar_beta.dim() != r * p) throw Error(ErrorCode::DimensionMismatch, "avar_beta is missing or misshaped");
  MatrixXd pv(r, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < r; ++i) {
      double var = fit.avar_beta(j * r + i, j * r + i);
      if (var < -1e-12)
        throw Error(ErrorCode::DegenerateVariance, "negative avar diagonal for beta(" + std::to_string(i + 1) + "," +
                                                       std::to_string(j + 1) + ")");
      var = std::max(var, 0.0);
      const double se = std::sqrt(var / fit.n);
      const double b = fit.beta(i, j);
      if (se == 0.0)
        pv(i, j) = b == 0.0 ? 1.0 : 0.0;
      else
        pv(i, j) = normal_two_sided(b / se);
    }
  return pv;
}

}  // namespace envcore
