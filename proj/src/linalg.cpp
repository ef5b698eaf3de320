#include "envcore/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "envcore/errors.hpp"

namespace envcore {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::string shape(const MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool pd_by_rule(const MatrixXd& m) {
  if (m.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(m.rows() - 1);
  return hi > 0.0 && lo > static_cast<double>(m.rows()) * kEps * hi;
}

// Columns 2..m of a Householder completion of unit vector w.
MatrixXd tangent_basis(const VectorXd& w) {
  Eigen::HouseholderQR<MatrixXd> qr{MatrixXd(w)};
  MatrixXd q = qr.householderQ();
  return q.rightCols(w.size() - 1);
}

double sphere_objective(const MatrixXd& a, const MatrixXd& b, const VectorXd& w) {
  const double qa = w.dot(a * w);
  const double qb = w.dot(b * w);
  if (!(qa > 0.0) || !(qb > 0.0)) return std::numeric_limits<double>::infinity();
  return std::log(qa) + std::log(qb);
}

// Minimize log(wᵀAw) + log(wᵀBw) over the unit sphere, starting at w.
// Riemannian Newton with gradient fallback and Armijo backtracking; every
// accepted step lowers the objective.
VectorXd minimize_on_sphere(const MatrixXd& a, const MatrixXd& b, VectorXd w,
                            const OptimizerOptions& opts) {
  const int m = static_cast<int>(w.size());
  if (m == 1) return w;
  double h = sphere_objective(a, b, w);
  for (int it = 0; it < opts.inner_max_iter; ++it) {
    const VectorXd aw = a * w;
    const VectorXd bw = b * w;
    const double qa = w.dot(aw);
    const double qb = w.dot(bw);
    const VectorXd grad = 2.0 * aw / qa + 2.0 * bw / qb;
    const double radial = w.dot(grad);
    const VectorXd rgrad = grad - radial * w;
    const double gnorm = rgrad.norm();
    if (gnorm <= opts.inner_grad_tol) break;

    const MatrixXd hess = 2.0 * a / qa - 4.0 * aw * aw.transpose() / (qa * qa) +
                          2.0 * b / qb - 4.0 * bw * bw.transpose() / (qb * qb);
    const MatrixXd t = tangent_basis(w);
    MatrixXd hr = t.transpose() * hess * t;
    hr.diagonal().array() -= radial;
    hr = 0.5 * (hr + hr.transpose()).eval();

    VectorXd dir;
    Eigen::LLT<MatrixXd> llt(hr);
    if (llt.info() == Eigen::Success) {
      dir = -(t * llt.solve(t.transpose() * grad));
    } else {
      dir = -rgrad;
    }
    double slope = rgrad.dot(dir);
    if (!(slope < 0.0)) {
      dir = -rgrad;
      slope = -gnorm * gnorm;
    }
    const double dn = dir.norm();
    if (dn > 1.0) {
      dir /= dn;
      slope /= dn;
    }

    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      VectorXd cand = (w + step * dir).normalized();
      const double hc = sphere_objective(a, b, cand);
      if (hc <= h + 1e-4 * step * slope) {
        moved = hc < h;
        if (moved) {
          w = cand;
          h = hc;
        }
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return w;
}

// Refines the current direction and the extreme eigenvectors of A, B and
// A + B⁻¹; returns the best. Never worse than refining w0 alone.
VectorXd best_direction(const MatrixXd& a, const MatrixXd& b, const VectorXd& w0,
                        const OptimizerOptions& opts) {
  VectorXd best = minimize_on_sphere(a, b, w0, opts);
  double fbest = sphere_objective(a, b, best);
  if (w0.size() == 1) return best;
  Eigen::LLT<MatrixXd> lb(b);
  const MatrixXd binv = lb.solve(MatrixXd::Identity(b.rows(), b.cols()));
  const MatrixXd mats[3] = {a, binv, a + binv};
  for (const auto& m : mats) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
    for (int c : {0, static_cast<int>(m.cols()) - 1}) {
      const VectorXd w = minimize_on_sphere(a, b, es.eigenvectors().col(c), opts);
      const double fw = sphere_objective(a, b, w);
      if (fw < fbest - 1e-14 * std::max(1.0, std::abs(fbest))) {
        best = w;
        fbest = fw;
      }
    }
  }
  return best;
}

MatrixXd orthonormalize(const MatrixXd& g) {
  Eigen::HouseholderQR<MatrixXd> qr(g);
  return qr.householderQ() * MatrixXd::Identity(g.rows(), g.cols());
}

struct RunResult {
  MatrixXd g;
  double objective;
  int sweeps;
  bool converged;
  std::vector<double> trace;
};

RunResult run_sweeps(const MatrixXd& m1, const MatrixXd& m2, MatrixXd g,
                     const OptimizerOptions& opts) {
  const int r = static_cast<int>(g.rows());
  const int u = static_cast<int>(g.cols());
  RunResult out{g, envelope_objective(g, m1, m2), 0, false, {}};
  out.trace.push_back(out.objective);
  double f = out.objective;
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    for (int j = 0; j < u; ++j) {
      MatrixXd others(r, u - 1);
      for (int c = 0, k = 0; c < u; ++c)
        if (c != j) others.col(k++) = g.col(c);
      MatrixXd basis;
      if (u == 1) {
        basis = MatrixXd::Identity(r, r);
      } else {
        Eigen::HouseholderQR<MatrixXd> qr(others);
        MatrixXd q = qr.householderQ();
        basis = q.rightCols(r - u + 1);
      }
      MatrixXd reduced[2];
      const MatrixXd* ms[2] = {&m1, &m2};
      for (int i = 0; i < 2; ++i) {
        const MatrixXd& mi = *ms[i];
        MatrixXd a = basis.transpose() * mi * basis;
        if (u > 1) {
          const MatrixXd mo = mi * others;
          const MatrixXd inner = others.transpose() * mo;
          const MatrixXd cross = basis.transpose() * mo;
          Eigen::LLT<MatrixXd> llt(inner);
          if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::NonPositiveDefinite, "GᵀMG lost definiteness during sweep");
          a -= cross * llt.solve(cross.transpose());
        }
        reduced[i] = 0.5 * (a + a.transpose());
      }
      VectorXd w0 = basis.transpose() * g.col(j);
      w0.normalize();
      // candidate directions matter for escaping the start's basin; later sweeps only polish
      g.col(j) = basis * (sweep == 1 ? best_direction(reduced[0], reduced[1], w0, opts)
                                     : minimize_on_sphere(reduced[0], reduced[1], w0, opts));
    }
    const double fn = envelope_objective(g, m1, m2);
    out.trace.push_back(fn);
    out.sweeps = sweep;
    if (fn < out.objective) {
      out.objective = fn;
      out.g = g;
    }
    if (std::abs(f - fn) <= opts.tol * std::max(1.0, std::abs(fn))) {
      out.converged = true;
      break;
    }
    f = fn;
  }
  out.g = orthonormalize(out.g);
  return out;
}

void check_pair(const SymMatrix& m1, const SymMatrix& m2) {
  if (m1.dim() != m2.dim())
    throw Error(ErrorCode::DimensionMismatch,
                "M1 is " + shape(m1.matrix()) + " but M2 is " + shape(m2.matrix()));
}

// Returns (possibly jittered) copies; throws when not PD and jitter is off.
std::pair<MatrixXd, MatrixXd> prepared_pair(const SymMatrix& m1, const SymMatrix& m2,
                                            const OptimizerOptions& opts, bool& jittered) {
  MatrixXd a = m1.matrix();
  MatrixXd b = m2.matrix();
  jittered = false;
  const bool pd1 = m1.is_positive_definite();
  const bool pd2 = m2.is_positive_definite();
  if (pd1 && pd2) return {a, b};
  if (!opts.jitter)
    throw Error(ErrorCode::NonPositiveDefinite,
                std::string(pd1 ? "M2" : "M1") + " is not positive definite");
  const double r = static_cast<double>(a.rows());
  a.diagonal().array() += opts.jitter_delta * a.trace() / r;
  b.diagonal().array() += opts.jitter_delta * b.trace() / r;
  jittered = true;
  if (!pd_by_rule(a) || !pd_by_rule(b))
    throw Error(ErrorCode::NonPositiveDefinite, "jitter did not restore definiteness");
  return {a, b};
}

}  // namespace

SymMatrix::SymMatrix(const MatrixXd& m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "symmetric matrix must be square, got " + shape(m));
  const double scale = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
  const double asym = m.size() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (!std::isfinite(scale)) throw Error(ErrorCode::InvalidData, "non-finite matrix entry");
  if (asym > 1e-12 * std::max(scale, std::numeric_limits<double>::min()))
    throw Error(ErrorCode::InvalidData, "matrix is not symmetric");
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::symmetrize(const MatrixXd& m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "symmetric matrix must be square, got " + shape(m));
  SymMatrix s;
  s.m_ = 0.5 * (m + m.transpose());
  return s;
}

SymMatrix SymMatrix::identity(int dim) { return symmetrize(MatrixXd::Identity(dim, dim)); }

bool SymMatrix::is_positive_definite() const { return pd_by_rule(m_); }

double SymMatrix::log_det() const {
  if (!is_positive_definite()) throw Error(ErrorCode::NonPositiveDefinite, "log_det of non-PD matrix");
  return logdet_pd(m_, "matrix");
}

SymMatrix SymMatrix::inverse() const {
  if (!is_positive_definite()) throw Error(ErrorCode::NonPositiveDefinite, "inverse of non-PD matrix");
  return symmetrize(inverse_pd(m_, "matrix"));
}

MatrixXd canonicalize_columns(const MatrixXd& g) {
  MatrixXd c = g;
  const int r = static_cast<int>(c.rows());
  const int u = static_cast<int>(c.cols());
  std::vector<double> key(u);
  std::vector<int> row(u);
  for (int j = 0; j < u; ++j) {
    const double maxabs = c.col(j).cwiseAbs().maxCoeff();
    int idx = 0;
    while (std::abs(c(idx, j)) < maxabs * (1.0 - 1e-12)) ++idx;
    if (c(idx, j) < 0.0) c.col(j) *= -1.0;
    int first = 0;
    while (first < r - 1 && std::abs(c(first, j)) <= 1e-12) ++first;
    key[j] = c(first, j);
    row[j] = first;
  }
  auto before = [&](int a, int b) {
    if (key[a] > key[b] + 1e-12) return true;
    if (key[b] > key[a] + 1e-12) return false;
    return row[a] < row[b];
  };
  std::vector<int> order(u);
  for (int j = 0; j < u; ++j) order[j] = j;
  // insertion sort: stable and deterministic under the tolerant comparison
  for (int i = 1; i < u; ++i) {
    int v = order[i];
    int k = i - 1;
    while (k >= 0 && before(v, order[k])) {
      order[k + 1] = order[k];
      --k;
    }
    order[k + 1] = v;
  }
  MatrixXd out(r, u);
  for (int j = 0; j < u; ++j) out.col(j) = c.col(order[j]);
  return out;
}

SemiOrthBasis::SemiOrthBasis(const MatrixXd& g) : rows_(static_cast<int>(g.rows())) {
  if (g.cols() > g.rows())
    throw Error(ErrorCode::DimensionMismatch, "basis has more columns than rows: " + shape(g));
  const double err = (g.transpose() * g - MatrixXd::Identity(g.cols(), g.cols())).norm();
  if (!(err <= 1e-10)) throw Error(ErrorCode::InvalidData, "columns are not orthonormal");
  g_ = canonicalize_columns(g);
}

SemiOrthBasis SemiOrthBasis::empty(int rows) {
  SemiOrthBasis b;
  b.rows_ = rows;
  b.g_ = MatrixXd(rows, 0);
  return b;
}

SemiOrthBasis SemiOrthBasis::leading_identity(int rows, int cols) {
  return SemiOrthBasis(MatrixXd::Identity(rows, cols));
}

SemiOrthBasis SemiOrthBasis::of_span(const MatrixXd& a) {
  if (a.cols() == 0) return empty(static_cast<int>(a.rows()));
  Eigen::ColPivHouseholderQR<MatrixXd> piv(a);
  piv.setThreshold(1e-10);
  if (piv.rank() < a.cols()) throw Error(ErrorCode::InvalidData, "matrix is column rank deficient");
  return SemiOrthBasis(orthonormalize(a));
}

double envelope_objective(const MatrixXd& g, const MatrixXd& m1, const MatrixXd& m2) {
  if (g.rows() != m1.rows() || g.rows() != m2.rows())
    throw Error(ErrorCode::DimensionMismatch, "G has " + std::to_string(g.rows()) +
                                                  " rows, M1 is " + shape(m1) + ", M2 is " + shape(m2));
  if (g.cols() == 0) return 0.0;
  const MatrixXd a = g.transpose() * m1 * g;
  const MatrixXd b = g.transpose() * m2 * g;
  Eigen::LLT<MatrixXd> la(a), lb(b);
  if (la.info() != Eigen::Success) throw Error(ErrorCode::NonPositiveDefinite, "GᵀM1G is not positive definite");
  if (lb.info() != Eigen::Success) throw Error(ErrorCode::NonPositiveDefinite, "GᵀM2G is not positive definite");
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i) s += std::log(la.matrixLLT()(i, i)) + std::log(lb.matrixLLT()(i, i));
  return 2.0 * s;
}

double envelope_objective(const SemiOrthBasis& g, const SymMatrix& m1, const SymMatrix& m2) {
  return envelope_objective(g.matrix(), m1.matrix(), m2.matrix());
}

namespace {

struct MultiStart {
  RunResult best;
  int starts = 0;
};

MultiStart multi_start(const MatrixXd& a, const MatrixXd& b, int u, const OptimizerOptions& opts) {
  const int r = static_cast<int>(a.rows());
  std::vector<MatrixXd> starts;
  // The envelope is spanned by some u eigenvectors of each reducing matrix, not necessarily the
  // extreme ones, so besides the two ends also pick u eigenvectors greedily by the objective.
  auto add_eigen_starts = [&](const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    const MatrixXd& v = es.eigenvectors();
    starts.push_back(v.rightCols(u));
    starts.push_back(v.leftCols(u));
    std::vector<bool> used(r, false);
    MatrixXd greedy(r, 0);
    for (int step = 0; step < u; ++step) {
      int pick = -1;
      double fpick = INFINITY;
      MatrixXd trial(r, step + 1);
      trial.leftCols(step) = greedy;
      for (int c = 0; c < r; ++c) {
        if (used[c]) continue;
        trial.col(step) = v.col(c);
        const double fc = envelope_objective(trial, a, b);
        if (fc < fpick) {
          fpick = fc;
          pick = c;
        }
      }
      used[pick] = true;
      greedy.conservativeResize(r, step + 1);
      greedy.col(step) = v.col(pick);
    }
    starts.push_back(greedy);
  };
  const MatrixXd binv = inverse_pd(b, "M2");
  add_eigen_starts(a);
  add_eigen_starts(binv);
  add_eigen_starts(a + binv);
  if (opts.n_random > 0) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int s = 0; s < opts.n_random; ++s) {
      MatrixXd z(r, u);
      for (int j = 0; j < u; ++j)
        for (int i = 0; i < r; ++i) z(i, j) = nd(rng);
      starts.push_back(orthonormalize(z));
    }
  }
  // drop starts spanning the same subspace as an earlier one
  std::vector<MatrixXd> unique;
  for (const auto& s : starts) {
    bool dup = false;
    for (const auto& t : unique)
      if ((s * s.transpose() - t * t.transpose()).norm() < 1e-9) dup = true;
    if (!dup) unique.push_back(s);
  }

  bool have = false;
  MultiStart ms;
  RunResult& best = ms.best;
  for (const auto& s : unique) {
    RunResult res = run_sweeps(a, b, s, opts);
    if (!have || res.objective < best.objective) {
      best = std::move(res);
      have = true;
    }
  }
  ms.starts = static_cast<int>(unique.size());
  return ms;
}

}  // namespace

EnvelopeOptimum minimize_envelope_objective(const SymMatrix& m1, const SymMatrix& m2, int u,
                                            const OptimizerOptions& opts) {
  check_pair(m1, m2);
  const int r = m1.dim();
  if (u < 0 || u > r)
    throw Error(ErrorCode::DimensionMismatch, "envelope dimension " + std::to_string(u) +
                                                  " outside [0, " + std::to_string(r) + "]");
  EnvelopeOptimum out;
  auto [a, b] = prepared_pair(m1, m2, opts, out.jittered);
  if (u == 0) {
    out.basis = SemiOrthBasis::empty(r);
    out.trace = {0.0};
    return out;
  }
  if (u == r) {
    out.basis = SemiOrthBasis::leading_identity(r, r);
    out.objective = envelope_objective(out.basis.matrix(), a, b);
    out.trace = {out.objective};
    return out;
  }

  MultiStart ms = multi_start(a, b, u, opts);
  RunResult& best = ms.best;
  if (!best.converged)
    throw NoConvergenceError("envelope objective still changing after " +
                                 std::to_string(opts.max_sweeps) + " sweeps",
                             best.g, best.objective);
  out.basis = SemiOrthBasis(best.g);
  out.objective = envelope_objective(out.basis.matrix(), a, b);
  out.sweeps = best.sweeps;
  out.trace = std::move(best.trace);
  out.starts = ms.starts;
  return out;
}

EnvelopeOptimum refine_envelope_basis(const SymMatrix& m1, const SymMatrix& m2,
                                      const MatrixXd& start, const OptimizerOptions& opts) {
  check_pair(m1, m2);
  if (start.rows() != m1.dim())
    throw Error(ErrorCode::DimensionMismatch, "start has " + std::to_string(start.rows()) + " rows");
  EnvelopeOptimum out;
  auto [a, b] = prepared_pair(m1, m2, opts, out.jittered);
  const int r = m1.dim();
  const int u = static_cast<int>(start.cols());
  if (u == 0 || u == r) {
    out.basis = u == 0 ? SemiOrthBasis::empty(r) : SemiOrthBasis::leading_identity(r, r);
    out.objective = envelope_objective(out.basis.matrix(), a, b);
    out.trace = {out.objective};
    return out;
  }
  RunResult res = run_sweeps(a, b, orthonormalize(start), opts);
  if (!res.converged)
    throw NoConvergenceError("envelope objective still changing after " +
                                 std::to_string(opts.max_sweeps) + " sweeps",
                             res.g, res.objective);
  out.basis = SemiOrthBasis(res.g);
  out.objective = envelope_objective(out.basis.matrix(), a, b);
  out.sweeps = res.sweeps;
  out.trace = std::move(res.trace);
  out.starts = 1;
  return out;
}

SemiOrthBasis complete_basis(const SemiOrthBasis& b) {
  const int r = b.rows();
  const int u = b.cols();
  if (u == r) return SemiOrthBasis::empty(r);
  if (u == 0) return SemiOrthBasis::leading_identity(r, r);
  Eigen::HouseholderQR<MatrixXd> qr(b.matrix());
  MatrixXd q = qr.householderQ();
  return SemiOrthBasis(MatrixXd(q.rightCols(r - u)));
}

double subspace_distance(const SemiOrthBasis& a, const SemiOrthBasis& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::DimensionMismatch, "cannot compare " + shape(a.matrix()) + " with " +
                                                  shape(b.matrix()));
  if (a.cols() == 0) return 0.0;
  return (a.projector() - b.projector()).norm() / std::sqrt(2.0 * a.cols());
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

MatrixXd pinv_sym(const MatrixXd& a, double rel_cutoff) {
  const MatrixXd s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  const VectorXd& lam = es.eigenvalues();
  const double top = lam.cwiseAbs().maxCoeff();
  MatrixXd out = MatrixXd::Zero(a.rows(), a.cols());
  for (int i = 0; i < lam.size(); ++i) {
    if (std::abs(lam(i)) <= rel_cutoff * top) continue;
    out += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose() / lam(i);
  }
  return out;
}

double logdet_pd(const MatrixXd& a, const std::string& what) {
  if (a.rows() == 0) return 0.0;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPositiveDefinite, what + " is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

MatrixXd inverse_pd(const MatrixXd& a, const std::string& what) {
  if (a.rows() == 0) return a;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !pd_by_rule(a))
    throw Error(ErrorCode::NonPositiveDefinite, what + " is not positive definite");
  MatrixXd inv = llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
  return 0.5 * (inv + inv.transpose());
}

bool is_psd(const MatrixXd& a, double tol) {
  if (a.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  return es.eigenvalues()(0) >= -tol * std::max(1.0, top);
}

MatrixXd duplication_matrix(int n) {
  MatrixXd d = MatrixXd::Zero(n * n, n * (n + 1) / 2);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i, ++idx) {
      d(i + j * n, idx) = 1.0;
      d(j + i * n, idx) = 1.0;
    }
  return d;
}

MatrixXd elimination_matrix(int n) {
  MatrixXd l = MatrixXd::Zero(n * (n + 1) / 2, n * n);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i, ++idx) l(idx, i + j * n) = 1.0;
  return l;
}

MatrixXd commutation_matrix(int rows, int cols) {
  MatrixXd k = MatrixXd::Zero(rows * cols, rows * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) k(j + i * cols, i + j * rows) = 1.0;
  return k;
}

VectorXd vech(const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  VectorXd v(n * (n + 1) / 2);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) v(idx++) = a(i, j);
  return v;
}

VectorXd vec(const MatrixXd& a) { return Eigen::Map<const VectorXd>(a.data(), a.size()); }

}  // namespace envcore
