#include "envcore/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "envcore/errors.hpp"

namespace envcore {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

SymMatrix sym(const MatrixXd& m) { return SymMatrix::symmetrize(m); }

MatrixXd moment_inverse(const MatrixXd& m, const std::string& name) {
  try {
    return inverse_pd(m, name);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularMoment, name + " is singular");
  }
}

double moment_logdet(const MatrixXd& m, const std::string& name) {
  try {
    return logdet_pd(m, name);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularMoment, name + " is singular");
  }
}

// (I_p ⊗ U) A (I_p ⊗ Uᵀ)
MatrixXd lift(const MatrixXd& a, const MatrixXd& U, int p) {
  const MatrixXd iu = kron(MatrixXd::Identity(p, p), U);
  return iu * a * iu.transpose();
}

struct Unconstrained {
  VectorXd x_bar, y_bar;
  MatrixXd S_X, S_X_inv, S_Y, beta, Sigma;
};

Unconstrained unconstrained(const Dataset& data) {
  validate_dataset(data);
  if (data.n() <= data.p() + 1)
    throw Error(ErrorCode::SingularDesign, "n = " + std::to_string(data.n()) + " must exceed p + 1");
  Unconstrained u;
  u.x_bar = data.X.colwise().mean().transpose();
  u.y_bar = data.Y.colwise().mean().transpose();
  u.S_X = cross_moment(data.X, data.X);
  try {
    u.S_X_inv = inverse_pd(u.S_X, "S_X");
  } catch (const Error&) {
    throw Error(ErrorCode::SingularDesign, "S_X is singular");
  }
  u.S_Y = cross_moment(data.Y, data.Y);
  u.beta = cross_moment(data.Y, data.X) * u.S_X_inv;
  u.Sigma = u.S_Y - u.beta * u.S_X * u.beta.transpose();
  u.Sigma = 0.5 * (u.Sigma + u.Sigma.transpose()).eval();
  return u;
}

struct Constrained {
  TransformedData t;
  MomentSet m;
  MatrixXd U0;
  MatrixXd alpha_cm;
  double c = 0.0;
  double logdet_marginal_S = 0.0;
};

Constrained constrained(const Dataset& data, const MatrixXd& U, InterceptMode mode) {
  validate_dataset(data);
  Constrained c;
  c.t = transform_responses(data, U);
  c.m = compute_moments(c.t, data.X, mode);
  c.U0 = c.t.W2;
  c.alpha_cm = constrained_alpha(c.m);
  const int n = data.n();
  c.c = n * c.t.logdetW - 0.5 * n * data.r() * (1.0 + kLog2Pi);
  c.logdet_marginal_S = moment_logdet(c.m.marginal_S(), mode == InterceptMode::model2 ? "T_S" : "S_S");
  return c;
}

EnvelopeFit base_fit(EstimatorKind kind, const Dataset& data, InterceptMode mode, int k, int dim) {
  EnvelopeFit f;
  f.kind = kind;
  f.intercept_mode = mode;
  f.n = data.n();
  f.r = data.r();
  f.p = data.p();
  f.k = k;
  f.dim = dim;
  return f;
}

// Fills coefficients, intercepts and Σ̂ for the constrained family from α̂ and Σ̂_{D|S}.
void finish_constrained(EnvelopeFit& f, const Constrained& c, const MatrixXd& alpha,
                        const MatrixXd& Sigma_DS) {
  const MomentSet& m = c.m;
  const int s = static_cast<int>(c.U0.cols());
  MatrixXd phi = MatrixXd::Zero(f.k, s);
  if (s > 0) phi = (m.S_DS - alpha * m.S_SX.transpose()) * moment_inverse(m.S_S, "S_S");
  const MatrixXd& sig_s = m.marginal_S();
  f.U = c.t.U;
  f.alpha = alpha;
  f.alpha0 = m.d_bar - alpha * m.x_bar - phi * m.s_bar;
  f.beta = c.t.U * alpha;
  if (f.intercept_mode == InterceptMode::model2)
    f.beta0 = c.t.U * f.alpha0;
  else
    f.beta0 = c.t.U * (f.alpha0 + phi * m.s_bar) + c.U0 * m.s_bar;
  f.phi_DS = phi;
  f.Sigma_DS = sym(Sigma_DS);
  f.Sigma = sym(assemble_sigma(c.t.U, c.U0, phi, Sigma_DS, sig_s));
}

}  // namespace

const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::um: return "um";
    case EstimatorKind::cm: return "cm";
    case EstimatorKind::em: return "em";
    case EstimatorKind::ecm: return "ecm";
    case EstimatorKind::secm: return "secm";
  }
  return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "um") return EstimatorKind::um;
  if (s == "cm") return EstimatorKind::cm;
  if (s == "em") return EstimatorKind::em;
  if (s == "ecm") return EstimatorKind::ecm;
  if (s == "secm") return EstimatorKind::secm;
  throw Error(ErrorCode::ParseError, "unknown model '" + s + "' (expected um, cm, em, ecm or secm)");
}

int n_params(EstimatorKind kind, int r, int p, int k, int dim, InterceptMode mode) {
  const int cov = r * (r + 1) / 2;
  const int extra = mode == InterceptMode::model3 ? r - k : 0;
  switch (kind) {
    case EstimatorKind::um: return r + p * r + cov;
    case EstimatorKind::em: return r + p * dim + cov;
    case EstimatorKind::cm: return k * (p + 1) + cov + extra;
    case EstimatorKind::ecm: return k + p * dim + cov + extra;
    case EstimatorKind::secm: return 2 * k - 1 + p * dim + cov + extra;
  }
  return 0;
}

double EnvelopeFit::bic() const { return -2.0 * loglik + std::log(static_cast<double>(n)) * n_params; }

MatrixXd EnvelopeFit::eta() const {
  switch (kind) {
    case EstimatorKind::em: return basis.transpose() * beta;
    case EstimatorKind::ecm: return basis.transpose() * alpha;
    case EstimatorKind::secm: return basis.transpose() * Lambda.asDiagonal() * alpha;
    default: return MatrixXd();
  }
}

MatrixXd constrained_alpha(const MomentSet& m) {
  MatrixXd dx_s = m.S_DX;
  if (m.S_S.rows() > 0) dx_s -= m.S_DS * moment_inverse(m.S_S, "S_S") * m.S_SX;
  return dx_s * moment_inverse(m.S_X_given_S, "S_{X|S}");
}

double gaussian_loglik(const Dataset& data, const VectorXd& beta0, const MatrixXd& beta,
                       const MatrixXd& Sigma) {
  const int n = data.n();
  const int r = data.r();
  Eigen::LLT<MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPositiveDefinite, "Σ is not positive definite");
  MatrixXd res = data.Y - data.X * beta.transpose();
  res.rowwise() -= beta0.transpose();
  const MatrixXd z = llt.matrixL().solve(res.transpose());
  const double quad = z.squaredNorm();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * n * (r * kLog2Pi + logdet) - 0.5 * quad;
}

double scaled_envelope_objective(const MatrixXd& g, const VectorXd& scales, const MatrixXd& m1,
                                 const MatrixXd& m2) {
  const MatrixXd a = scales.asDiagonal();
  const MatrixXd ainv = scales.cwiseInverse().asDiagonal();
  return envelope_objective(g, a * m1 * a, ainv * m2 * ainv);
}

EnvelopeFit fit_um(const Dataset& data) {
  const Unconstrained u = unconstrained(data);
  EnvelopeFit f = base_fit(EstimatorKind::um, data, InterceptMode::model3, data.r(), data.r());
  f.beta = u.beta;
  f.beta0 = u.y_bar - u.beta * u.x_bar;
  f.Sigma = sym(u.Sigma);
  const double logdet = moment_logdet(u.Sigma, "S_{Y|X}");
  f.loglik = -0.5 * f.n * (f.r * (1.0 + kLog2Pi) + logdet);
  f.n_params = n_params(f.kind, f.r, f.p, f.k, f.dim, f.intercept_mode);
  f.avar_beta = sym(kron(u.S_X_inv, u.Sigma));
  return f;
}

EnvelopeFit fit_cm(const Dataset& data, const MatrixXd& U, InterceptMode mode) {
  const Constrained c = constrained(data, U, mode);
  const int k = c.t.k();
  EnvelopeFit f = base_fit(EstimatorKind::cm, data, mode, k, k);
  const MatrixXd& sds = c.m.S_D_given_XS;
  finish_constrained(f, c, c.alpha_cm, sds);
  f.loglik = c.c - 0.5 * f.n * (c.logdet_marginal_S + moment_logdet(sds, "S_{D|(X,S)}"));
  f.n_params = n_params(f.kind, f.r, f.p, k, k, mode);
  f.avar_alpha = sym(kron(moment_inverse(c.m.S_X, "S_X"), sds));
  f.avar_beta = sym(lift(f.avar_alpha.matrix(), U, f.p));
  return f;
}

EnvelopeFit fit_em(const Dataset& data, int u, const FitOptions& opts) {
  const Unconstrained um = unconstrained(data);
  const int r = data.r();
  if (u < 0 || u > r) throw Error(ErrorCode::InvalidSpec, "em dimension must lie in [0, r]");
  if (data.n() <= data.p() + r)
    throw Error(ErrorCode::SingularDesign, "n = " + std::to_string(data.n()) + " must exceed p + r");
  EnvelopeFit f = base_fit(EstimatorKind::em, data, InterceptMode::model3, r, u);
  const SymMatrix m1 = sym(um.Sigma);
  const SymMatrix m2 = sym(moment_inverse(um.S_Y, "S_Y"));
  const EnvelopeOptimum opt = minimize_envelope_objective(m1, m2, u, opts.optimizer);
  if (opt.jittered) f.notes.push_back("ridge jitter applied to M1 and M2");
  const MatrixXd G = opt.basis.matrix();
  const MatrixXd G0 = complete_basis(opt.basis).matrix();
  const MatrixXd eta = G.transpose() * um.beta;
  f.basis = G;
  f.beta = G * eta;
  f.beta0 = um.y_bar - f.beta * um.x_bar;
  f.Omega = sym(G.transpose() * um.Sigma * G);
  f.Omega0 = sym(G0.transpose() * um.S_Y * G0);
  f.Sigma = sym(G * f.Omega.matrix() * G.transpose() + G0 * f.Omega0.matrix() * G0.transpose());
  f.objective = opt.objective;
  f.sweeps = opt.sweeps;
  f.loglik = -0.5 * f.n * (r * (1.0 + kLog2Pi) + moment_logdet(um.S_Y, "S_Y") + opt.objective);
  f.n_params = n_params(f.kind, r, f.p, r, u, f.intercept_mode);
  f.avar_beta = sym(envelope_avar(um.S_X, G, G0, f.Omega.matrix(), f.Omega0.matrix(), eta, opts.pinv_cutoff));
  return f;
}

EnvelopeFit fit_ecm(const Dataset& data, const MatrixXd& U, int u, InterceptMode mode, const FitOptions& opts) {
  const Constrained c = constrained(data, U, mode);
  const int k = c.t.k();
  if (u < 0 || u > k) throw Error(ErrorCode::InvalidSpec, "ecm dimension must lie in [0, k]");
  EnvelopeFit f = base_fit(EstimatorKind::ecm, data, mode, k, u);
  const MatrixXd& s1 = c.m.S_D_given_XS;
  const MatrixXd& s2 = c.m.S_D_given_S;
  const EnvelopeOptimum opt =
      minimize_envelope_objective(sym(s1), sym(moment_inverse(s2, "S_{D|S}")), u, opts.optimizer);
  if (opt.jittered) f.notes.push_back("ridge jitter applied to M1 and M2");
  const MatrixXd Phi = opt.basis.matrix();
  const MatrixXd Phi0 = complete_basis(opt.basis).matrix();
  const MatrixXd eta = Phi.transpose() * c.alpha_cm;
  f.basis = Phi;
  f.Omega = sym(Phi.transpose() * s1 * Phi);
  f.Omega0 = sym(Phi0.transpose() * s2 * Phi0);
  const MatrixXd sds = Phi * f.Omega.matrix() * Phi.transpose() + Phi0 * f.Omega0.matrix() * Phi0.transpose();
  finish_constrained(f, c, Phi * eta, sds);
  f.objective = opt.objective;
  f.sweeps = opt.sweeps;
  f.loglik = c.c - 0.5 * f.n * (c.logdet_marginal_S + moment_logdet(s2, "S_{D|S}") + opt.objective);
  f.n_params = n_params(f.kind, f.r, f.p, k, u, mode);
  f.avar_alpha = sym(envelope_avar(c.m.S_X, Phi, Phi0, f.Omega.matrix(), f.Omega0.matrix(), eta, opts.pinv_cutoff));
  f.avar_beta = sym(lift(f.avar_alpha.matrix(), U, f.p));
  return f;
}

namespace {

// |log a_j| beyond this means the scales are running off to the boundary.
constexpr double kMaxLogScale = 14.0;

struct ScaledState {
  VectorXd a;
  MatrixXd g;
  double f;
};

// Golden-section minimization of `fn` on [lo, hi].
template <class Fn>
std::pair<double, double> golden(Fn&& fn, double lo, double hi, double tol) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = fn(x1), f2 = fn(x2);
  while (hi - lo > tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = fn(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = fn(x2);
    }
  }
  return f1 <= f2 ? std::make_pair(x1, f1) : std::make_pair(x2, f2);
}

EnvelopeOptimum g_step(const MatrixXd& s1, const MatrixXd& s2inv, const VectorXd& a, int v,
                       const MatrixXd* warm, const OptimizerOptions& o) {
  const MatrixXd A = a.asDiagonal();
  const MatrixXd Ai = a.cwiseInverse().asDiagonal();
  const SymMatrix m1 = SymMatrix::symmetrize(A * s1 * A);
  const SymMatrix m2 = SymMatrix::symmetrize(Ai * s2inv * Ai);
  EnvelopeOptimum best = minimize_envelope_objective(m1, m2, v, o);
  if (warm) {
    EnvelopeOptimum w = refine_envelope_basis(m1, m2, *warm, o);
    if (w.objective < best.objective) best = std::move(w);
  }
  return best;
}

}  // namespace

EnvelopeFit fit_secm(const Dataset& data, const MatrixXd& U, int v, InterceptMode mode, const FitOptions& opts) {
  const Constrained c = constrained(data, U, mode);
  const int k = c.t.k();
  const int p = data.p();
  if (v < 1 || v > k) throw Error(ErrorCode::InvalidSpec, "secm dimension must lie in [1, k]");
  if (p * (k - v) < k - 1)
    throw Error(ErrorCode::Unidentifiable, "p(k - v) = " + std::to_string(p * (k - v)) + " < k - 1 = " +
                                               std::to_string(k - 1));
  EnvelopeFit f = base_fit(EstimatorKind::secm, data, mode, k, v);
  const MatrixXd& s1 = c.m.S_D_given_XS;
  const MatrixXd& s2 = c.m.S_D_given_S;
  const MatrixXd s2inv = moment_inverse(s2, "S_{D|S}");
  const ScaleOptions& so = opts.scales;

  OptimizerOptions profile_opts = opts.optimizer;
  profile_opts.tol = std::min(profile_opts.tol, 1e-12);
  // Basis re-optimized from a warm start; a slow final polish is accepted as it stands.
  auto refine = [&](const VectorXd& a, const MatrixXd& g0) -> std::pair<MatrixXd, double> {
    const MatrixXd A = a.asDiagonal();
    const MatrixXd Ai = a.cwiseInverse().asDiagonal();
    try {
      const EnvelopeOptimum w = refine_envelope_basis(SymMatrix::symmetrize(A * s1 * A),
                                                      SymMatrix::symmetrize(Ai * s2inv * Ai), g0, profile_opts);
      return {w.basis.matrix(), w.objective};
    } catch (const NoConvergenceError& e) {
      return {e.best_iterate(), e.best_objective()};
    } catch (const Error& e) {
      // extreme trial scales can make AS1A numerically singular; such trials are simply rejected
      if (e.code() != ErrorCode::NonPositiveDefinite) throw;
      return {g0, INFINITY};
    }
  };
  // d/dt of the objective at fixed θ with a = exp(t). At the optimal θ this is the gradient
  // of the profile objective.
  auto scale_gradient = [&](const VectorXd& a, const MatrixXd& th) -> VectorXd {
    const MatrixXd at = a.asDiagonal() * th;
    const MatrixXd it = a.cwiseInverse().asDiagonal() * th;
    const MatrixXd p1 = s1 * at * (at.transpose() * s1 * at).inverse() * at.transpose();
    const MatrixXd p2 = s2inv * it * (it.transpose() * s2inv * it).inverse() * it.transpose();
    return 2.0 * (p1.diagonal() - p2.diagonal());
  };
  auto with_scale = [](VectorXd a, int j, double t) {
    a(j) = std::exp(t);
    return a;
  };

  ScaledState st{VectorXd::Ones(k), MatrixXd(), 0.0};
  EnvelopeOptimum opt;
  try {
    opt = g_step(s1, s2inv, st.a, v, nullptr, opts.optimizer);
    st.g = opt.basis.matrix();
    st.f = opt.objective;
  } catch (const NoConvergenceError& e) {
    // the scale search below keeps polishing; only the final objective has to settle
    st.g = e.best_iterate();
    st.f = e.best_objective();
  }

  // One grid pass per scale over ± log_bracket, so the local search below starts in a good basin.
  for (int j = 1; j < k; ++j) {
    auto fn = [&](double t) { return refine(with_scale(st.a, j, t), st.g).second; };
    const double t0 = std::log(st.a(j));
    const int npts = std::max(3, so.grid_points);
    const double step = 2.0 * so.log_bracket / (npts - 1);
    int best_i = 0;
    double best_f = 0.0;
    for (int i = 0; i < npts; ++i) {
      const double fi = fn(t0 - so.log_bracket + i * step);
      if (i == 0 || fi < best_f) {
        best_f = fi;
        best_i = i;
      }
    }
    const double centre = t0 - so.log_bracket + best_i * step;
    const double t_new = golden(fn, centre - step, centre + step, so.golden_tol).first;
    const VectorXd a_new = with_scale(st.a, j, t_new);
    auto [g_new, f_new] = refine(a_new, st.g);
    if (f_new < st.f) st = {a_new, g_new, f_new};
  }

  // BFGS over the free log-scales t_1..t_{k-1}; the first scale stays at 1.
  const int m = k - 1;
  auto bfgs = [&]() {
    VectorXd t = st.a.tail(m).array().log();
    VectorXd gr = scale_gradient(st.a, st.g).tail(m);
    MatrixXd H = MatrixXd::Identity(m, m);
    for (int it = 0; it < so.max_outer && gr.norm() > so.grad_tol; ++it) {
      VectorXd dir = -H * gr;
      if (!(gr.dot(dir) < 0.0)) {
        H.setIdentity();
        dir = -gr;
      }
      const double dn = dir.norm();
      if (dn > so.log_bracket) dir *= so.log_bracket / dn;
      const double slope = gr.dot(dir);
      bool moved = false;
      for (double step = 1.0; step > 1e-10; step *= 0.5) {
        const VectorXd tn = t + step * dir;
        VectorXd an(k);
        an(0) = 1.0;
        an.tail(m) = tn.array().exp();
        auto [gn, fn] = refine(an, st.g);
        if (fn <= st.f + 1e-4 * step * slope) {
          const VectorXd grn = scale_gradient(an, gn).tail(m);
          const VectorXd sv = tn - t, yv = grn - gr;
          const double sy = sv.dot(yv);
          if (sy > 1e-12 * sv.norm() * yv.norm()) {
            const MatrixXd I = MatrixXd::Identity(m, m);
            H = (I - sv * yv.transpose() / sy) * H * (I - yv * sv.transpose() / sy) + sv * sv.transpose() / sy;
          }
          moved = fn < st.f;
          t = tn;
          gr = grn;
          st = {an, gn, fn};
          break;
        }
      }
      if (!moved) break;
      if (t.cwiseAbs().maxCoeff() > kMaxLogScale)
        throw NoConvergenceError("scale parameters diverge: the scaled envelope objective keeps decreasing "
                                 "toward the boundary of the parameter space",
                                 st.g, st.f);
    }
  };

  bool converged = k == 1;
  int outer = 0;
  while (!converged && outer < so.max_outer) {
    ++outer;
    const double f_start = st.f;
    bfgs();
    // fresh multi-start basis at the current scales, in case the warm start sits in a poor basin
    try {
      opt = g_step(s1, s2inv, st.a, v, &st.g, opts.optimizer);
      if (opt.objective < st.f) {
        st.g = opt.basis.matrix();
        st.f = opt.objective;
      }
    } catch (const NoConvergenceError& e) {
      if (e.best_objective() < st.f) {
        st.g = e.best_iterate();
        st.f = e.best_objective();
      }
    }
    if (std::abs(f_start - st.f) <= so.tol * std::max(1.0, std::abs(st.f))) converged = true;
  }
  if (!converged)
    throw NoConvergenceError("scaled envelope objective still changing after " +
                                 std::to_string(so.max_outer) + " outer iterations",
                             st.g, st.f);

  const MatrixXd Theta = SemiOrthBasis(st.g).matrix();
  const MatrixXd Theta0 = complete_basis(SemiOrthBasis(Theta)).matrix();
  const MatrixXd A = st.a.asDiagonal();
  const VectorXd d = st.a.cwiseInverse();
  const MatrixXd Ai = d.asDiagonal();
  const MatrixXd eta = Theta.transpose() * A * c.alpha_cm;
  f.basis = Theta;
  f.Lambda = st.a;
  f.Omega = sym(Theta.transpose() * A * s1 * A * Theta);
  f.Omega0 = sym(Theta0.transpose() * A * s2 * A * Theta0);
  const MatrixXd sds =
      Ai * (Theta * f.Omega.matrix() * Theta.transpose() + Theta0 * f.Omega0.matrix() * Theta0.transpose()) * Ai;
  finish_constrained(f, c, Ai * Theta * eta, sds);
  f.objective = scaled_envelope_objective(Theta, st.a, s1, s2inv);
  f.sweeps = outer;
  f.loglik = c.c - 0.5 * f.n * (c.logdet_marginal_S + moment_logdet(s2, "S_{D|S}") + f.objective);
  f.n_params = n_params(f.kind, f.r, p, k, v, mode);
  f.avar_alpha = sym(scaled_envelope_avar(c.m.S_X, d, Theta, Theta0, f.Omega.matrix(), f.Omega0.matrix(), eta,
                                          true, opts.pinv_cutoff));
  f.avar_beta = sym(lift(f.avar_alpha.matrix(), U, p));
  return f;
}

}  // namespace envcore
