#include "envcore/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include "envcore/errors.hpp"
#include "envcore/inference.hpp"

namespace envcore {

namespace {

constexpr std::uint64_t kDesignStream = 0;
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kDesignReplicate = ~std::uint64_t{0};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

MatrixXd diag_of(const std::vector<double>& v) {
  VectorXd d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) d(i) = v[i];
  return d.asDiagonal();
}

MatrixXd chol_lower(const MatrixXd& s) {
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidSpec, "covariance is not positive definite");
  return llt.matrixL();
}

// Rows are N(0, Σ_X) predictor draws.
MatrixXd draw_predictors(const ScenarioSpec& spec, std::mt19937_64& rng, MatrixXd& sigma_x) {
  if (spec.predictor_corr == PredictorCorr::factor_model) {
    const MatrixXd C = standard_normal(rng, spec.p, spec.p);
    sigma_x = C * C.transpose();
    return standard_normal(rng, spec.n, spec.p) * C.transpose();
  }
  sigma_x = MatrixXd::Constant(spec.p, spec.p, spec.rho);
  sigma_x.diagonal().setOnes();
  return standard_normal(rng, spec.n, spec.p) * chol_lower(sigma_x).transpose();
}

GeneratedData generate_envelope(const ScenarioSpec& spec, int replicate) {
  auto design = stream_rng(spec.seed, kDesignReplicate, kDesignStream);
  const int r = spec.r, u = spec.u, q = spec.q, q1 = spec.q1, q2 = spec.q - spec.q1;
  TruthRecord t;
  t.O = random_orthogonal(design, r);
  const MatrixXd K1 = standard_normal(design, u, q1);
  const MatrixXd K2 = spec.beta_scale * standard_normal(design, q1, spec.p);
  const MatrixXd X = draw_predictors(spec, design, t.Sigma_X);

  t.u = u;
  t.Gamma = t.O.leftCols(u);
  const MatrixXd G0 = t.O.rightCols(r - u);
  t.Sigma = t.Gamma * diag_of(spec.omega_eigs) * t.Gamma.transpose() +
            G0 * diag_of(spec.omega0_eigs) * G0.transpose();
  t.Sigma = 0.5 * (t.Sigma + t.Sigma.transpose()).eval();
  t.beta = t.Gamma * (K1 * K2);
  MatrixXd phi = MatrixXd::Zero(r, q);
  phi.topLeftCorner(u, q1) = K1;
  phi.block(u, q1, q2, q2) = MatrixXd::Identity(q2, q2);
  t.U = t.O * phi;
  t.alpha = MatrixXd::Zero(q, spec.p);
  t.alpha.topRows(q1) = K2;

  auto noise = stream_rng(spec.seed, static_cast<std::uint64_t>(replicate), kNoiseStream);
  MatrixXd Y = X * t.beta.transpose() + standard_normal(noise, spec.n, r) * chol_lower(t.Sigma).transpose();
  return {make_dataset(std::move(Y), X), t};
}

// Conditional construction: Y_D | X, Y_S and Y_S marginal, mapped back by Y = U Y_D + U0 Y_S.
GeneratedData assemble_conditional(const ScenarioSpec& spec, int replicate, TruthRecord t, const MatrixXd& X,
                                   const MatrixXd& sigma_ds, const MatrixXd* fixed_phi) {
  const int r = spec.r, k = spec.q, s = r - k;
  const MatrixXd U0 = constraint_complement(t.U).matrix();
  auto noise = stream_rng(spec.seed, static_cast<std::uint64_t>(replicate), kNoiseStream);
  const MatrixXd phi = fixed_phi ? *fixed_phi : standard_normal(noise, k, s);
  const MatrixXd YS = standard_normal(noise, spec.n, s);
  const MatrixXd YD = X * t.alpha.transpose() + YS * phi.transpose() +
                      standard_normal(noise, spec.n, k) * chol_lower(sigma_ds).transpose();
  MatrixXd Y = YD * t.U.transpose() + YS * U0.transpose();
  t.Sigma = assemble_sigma(t.U, U0, phi, sigma_ds, MatrixXd::Identity(s, s));
  return {make_dataset(std::move(Y), X), t};
}

GeneratedData generate_ecm_star(const ScenarioSpec& spec, int replicate) {
  auto design = stream_rng(spec.seed, kDesignReplicate, kDesignStream);
  const int k = spec.q, u = spec.u;
  TruthRecord t;
  t.u = u;
  t.Gamma = MatrixXd::Identity(k, u);
  const MatrixXd eta = spec.beta_scale * standard_normal(design, u, spec.p);
  t.U = standard_normal(design, spec.r, k);
  const MatrixXd X = draw_predictors(spec, design, t.Sigma_X);
  t.alpha = t.Gamma * eta;
  t.beta = t.U * t.alpha;
  MatrixXd sds = MatrixXd::Zero(k, k);
  for (int i = 0; i < u; ++i) sds(i, i) = spec.omega_eigs[i];
  for (int i = 0; i < k - u; ++i) sds(u + i, u + i) = spec.omega0_eigs[i];
  return assemble_conditional(spec, replicate, t, X, sds, nullptr);
}

GeneratedData generate_null_test(const ScenarioSpec& spec, int replicate) {
  auto design = stream_rng(spec.seed, kDesignReplicate, kDesignStream);
  const int k = spec.q, u = spec.u, k1 = k - spec.k2;
  TruthRecord t;
  t.u = u;
  t.U = standard_normal(design, spec.r, k);
  MatrixXd phi_env(k, u);
  phi_env.topRows(k1) = standard_normal(design, k1, u);
  phi_env.bottomRows(spec.k2).setConstant(spec.row_signal);
  Eigen::HouseholderQR<MatrixXd> qr(phi_env);
  t.Gamma = qr.householderQ() * MatrixXd::Identity(k, u);
  const MatrixXd Phi0 = complete_basis(SemiOrthBasis::of_span(t.Gamma)).matrix();
  const MatrixXd eta = spec.beta_scale * standard_normal(design, u, spec.p);
  const MatrixXd phi = standard_normal(design, k, spec.r - k);
  const MatrixXd X = draw_predictors(spec, design, t.Sigma_X);
  t.alpha = t.Gamma * eta;
  t.beta = t.U * t.alpha;
  const MatrixXd sds = t.Gamma * diag_of(spec.omega_eigs) * t.Gamma.transpose() +
                       Phi0 * diag_of(spec.omega0_eigs) * Phi0.transpose();
  return assemble_conditional(spec, replicate, t, X, 0.5 * (sds + sds.transpose()), &phi);
}

double quantile_sorted(const std::vector<double>& v, double prob) {
  if (v.empty()) return 0.0;
  const double pos = prob * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

struct FitRecord {
  MatrixXd beta;
  double mean_avar = 0.0;
  double distance = -1.0;
};

EstimatorSummary summarize(const std::string& name, const std::vector<FitRecord>& recs, const MatrixXd& truth,
                           int n) {
  EstimatorSummary s;
  s.name = name;
  s.reps = static_cast<int>(recs.size());
  const int R = s.reps;
  const double rn = std::sqrt(static_cast<double>(n));
  std::vector<double> mse(R), bias(R);
  MatrixXd sum = MatrixXd::Zero(truth.rows(), truth.cols());
  MatrixXd sumsq = MatrixXd::Zero(truth.rows(), truth.cols());
  double dist = 0.0;
  int ndist = 0;
  for (int i = 0; i < R; ++i) {
    const MatrixXd d = recs[i].beta - truth;
    mse[i] = d.squaredNorm() / static_cast<double>(d.size());
    bias[i] = d.mean();
    sum += d;
    sumsq += d.cwiseProduct(d);
    s.mean_avar += recs[i].mean_avar / R;
    s.mean_mse += mse[i] / R;
    if (recs[i].distance >= 0.0) {
      dist += recs[i].distance;
      ++ndist;
    }
  }
  if (ndist > 0) s.mean_subspace_distance = dist / ndist;
  std::vector<double> sorted = mse;
  std::sort(sorted.begin(), sorted.end());
  for (double pr : {0.0, 0.25, 0.5, 0.75, 1.0}) s.mse_quantiles.push_back(quantile_sorted(sorted, pr));
  for (double b : bias) s.pooled_bias += b / R;
  if (R > 1) {
    double ss = 0.0;
    for (double b : bias) ss += (b - s.pooled_bias) * (b - s.pooled_bias);
    s.pooled_bias_se = std::sqrt(ss / (R - 1) / R);
    const MatrixXd mean = sum / R;
    const MatrixXd var = (sumsq - R * mean.cwiseProduct(mean)) / (R - 1);
    s.mc_variance = var.mean() * rn * rn;
    double zmax = 0.0;
    for (int i = 0; i < var.rows(); ++i)
      for (int j = 0; j < var.cols(); ++j) {
        const double se = std::sqrt(std::max(var(i, j), 0.0) / R);
        if (se > 0.0) zmax = std::max(zmax, std::abs(mean(i, j)) / se);
      }
    s.max_entry_bias_z = zmax;
  }
  return s;
}

double mean_diag(const SymMatrix& m) { return m.dim() ? m.matrix().diagonal().mean() : 0.0; }

template <class Fn>
auto timed(SimulationReport& rep, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int threads_or_default(const StudyOptions& o) { return o.threads > 0 ? o.threads : configured_threads(); }

void check_reps(int reps) {
  if (reps < 1) throw Error(ErrorCode::InvalidSpec, "reps must be positive");
}

}  // namespace

const char* to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::s1: return "s1";
    case ScenarioId::s2: return "s2";
    case ScenarioId::ecm_star: return "ecm_star";
    case ScenarioId::bias_sweep: return "bias_sweep";
    case ScenarioId::null_test: return "null_test";
    case ScenarioId::custom: return "custom";
  }
  return "?";
}

ScenarioId scenario_from_string(const std::string& s) {
  for (ScenarioId id : {ScenarioId::s1, ScenarioId::s2, ScenarioId::ecm_star, ScenarioId::bias_sweep,
                        ScenarioId::null_test, ScenarioId::custom})
    if (s == to_string(id)) return id;
  throw Error(ErrorCode::ParseError, "unknown scenario '" + s + "'");
}

ScenarioSpec default_spec(ScenarioId id, std::uint64_t seed) {
  ScenarioSpec s;
  s.scenario_id = id;
  s.seed = seed;
  switch (id) {
    case ScenarioId::s1:
    case ScenarioId::bias_sweep:
    case ScenarioId::custom:
      s.omega_eigs = {0.5, 0.5, 1.5, 1.5, 1.5, 1.5};
      s.omega0_eigs.assign(14, 50.0);
      break;
    case ScenarioId::s2:
      s.q = 6;
      s.omega_eigs = {50.0, 50.0, 0.5, 0.5, 0.5, 0.5};
      s.omega0_eigs.assign(14, 0.5);
      break;
    case ScenarioId::ecm_star:
      s.u = 3;
      s.q = 15;
      s.q1 = 3;
      s.omega_eigs.assign(3, 0.5);
      s.omega0_eigs.assign(12, 50.0);
      break;
    case ScenarioId::null_test:
      s.n = 2000;
      s.r = 6;
      s.p = 3;
      s.u = 1;
      s.q = 3;
      s.q1 = 1;
      s.k2 = 1;
      s.omega_eigs = {1.0};
      s.omega0_eigs = {5.0, 5.0};
      break;
  }
  return s;
}

void validate_spec(const ScenarioSpec& s) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (s.n < 2 || s.r < 1 || s.p < 1) fail("n, r and p must be positive (n >= 2)");
  if (s.rho < 0.0 || s.rho >= 1.0) fail("rho must lie in [0, 1)");
  switch (s.scenario_id) {
    case ScenarioId::ecm_star:
      if (s.q < 1 || s.q > s.r) fail("k must lie in [1, r]");
      if (s.u < 0 || s.u > s.q) fail("u* must lie in [0, k]");
      if (static_cast<int>(s.omega_eigs.size()) != s.u) fail("omega_eigs must have u entries");
      if (static_cast<int>(s.omega0_eigs.size()) != s.q - s.u) fail("omega0_eigs must have k - u entries");
      break;
    case ScenarioId::null_test:
      if (s.q < 1 || s.q > s.r) fail("k must lie in [1, r]");
      if (s.u < 1 || s.k2 < 1 || s.k2 > s.q - s.u) fail("need u >= 1 and 1 <= k2 <= k - u");
      if (static_cast<int>(s.omega_eigs.size()) != s.u) fail("omega_eigs must have u entries");
      if (static_cast<int>(s.omega0_eigs.size()) != s.q - s.u) fail("omega0_eigs must have k - u entries");
      break;
    default:
      if (s.u < 0 || s.u > s.r) fail("u must lie in [0, r]");
      if (s.q1 < 0 || s.q1 > std::min(s.u, s.q)) fail("q1 must not exceed min(u, q)");
      if (s.q - s.q1 > s.r - s.u) fail("q - q1 must not exceed r - u");
      if (static_cast<int>(s.omega_eigs.size()) != s.u) fail("omega_eigs must have u entries");
      if (static_cast<int>(s.omega0_eigs.size()) != s.r - s.u) fail("omega0_eigs must have r - u entries");
  }
  for (double e : s.omega_eigs)
    if (!(e > 0.0)) fail("eigenvalues must be positive");
  for (double e : s.omega0_eigs)
    if (!(e > 0.0)) fail("eigenvalues must be positive");
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ replicate) ^ stream);
  return std::mt19937_64(key);
}

MatrixXd standard_normal(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

MatrixXd random_orthogonal(std::mt19937_64& rng, int dim) {
  const MatrixXd z = standard_normal(rng, dim, dim);
  Eigen::HouseholderQR<MatrixXd> qr(z);
  MatrixXd q = qr.householderQ();
  const MatrixXd rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (rr(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

GeneratedData generate_scenario(const ScenarioSpec& spec, int replicate) {
  validate_spec(spec);
  if (replicate < 0) throw Error(ErrorCode::InvalidSpec, "replicate index must be non-negative");
  switch (spec.scenario_id) {
    case ScenarioId::ecm_star: return generate_ecm_star(spec, replicate);
    case ScenarioId::null_test: return generate_null_test(spec, replicate);
    default: return generate_envelope(spec, replicate);
  }
}

int configured_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("ENVCORE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return hw;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  std::vector<std::exception_ptr> errors(std::max(count, 0));
  const int workers = std::max(1, std::min(threads, count));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

const EstimatorSummary& SimulationReport::estimator(const std::string& name) const {
  for (const auto& e : estimators)
    if (e.name == name) return e;
  throw Error(ErrorCode::InvalidSpec, "report has no estimator '" + name + "'");
}

SimulationReport run_efficiency_study(const ScenarioSpec& spec, int reps, const StudyOptions& opts) {
  validate_spec(spec);
  check_reps(reps);
  SimulationReport rep;
  rep.study = "efficiency";
  rep.spec = spec;
  rep.reps = reps;
  timed(rep, [&] {
    std::vector<FitRecord> um(reps), cm(reps), em(reps);
    std::vector<int> dims(reps);
    std::vector<std::vector<std::string>> warns(reps);
    MatrixXd truth;
    parallel_for(reps, threads_or_default(opts), [&](int i) {
      const GeneratedData g = generate_scenario(spec, i);
      const EnvelopeFit fu = fit_um(g.data);
      const EnvelopeFit fc = fit_cm(g.data, g.truth.U, InterceptMode::model3);
      int u = 0;
      if (opts.fixed_dim) {
        u = *opts.fixed_dim;
      } else {
        const DimensionSelection sel = select_dimension(g.data, EstimatorKind::em, std::nullopt,
                                                        InterceptMode::model3, opts.fit);
        u = sel.selected;
        warns[i] = sel.warnings;
      }
      const EnvelopeFit fe = fit_em(g.data, u, opts.fit);
      um[i] = {fu.beta, mean_diag(fu.avar_beta), -1.0};
      cm[i] = {fc.beta, mean_diag(fc.avar_beta), -1.0};
      double dist = -1.0;
      if (fe.basis.cols() == g.truth.Gamma.cols() && fe.basis.cols() > 0)
        dist = subspace_distance(SemiOrthBasis(fe.basis), SemiOrthBasis::of_span(g.truth.Gamma));
      em[i] = {fe.beta, mean_diag(fe.avar_beta), dist};
      dims[i] = u;
    });
    truth = generate_scenario(spec, 0).truth.beta;
    rep.estimators.push_back(summarize("um", um, truth, spec.n));
    rep.estimators.push_back(summarize("cm", cm, truth, spec.n));
    rep.estimators.push_back(summarize("em", em, truth, spec.n));
    for (int i = 0; i < reps; ++i) {
      ++rep.dim_frequency[dims[i]];
      for (const auto& w : warns[i]) rep.warnings.push_back("replicate " + std::to_string(i) + ": " + w);
    }
  });
  return rep;
}

SimulationReport run_bias_sweep(const ScenarioSpec& spec, const std::vector<int>& k_grid, int reps,
                                const StudyOptions& opts) {
  validate_spec(spec);
  check_reps(reps);
  for (int k : k_grid)
    if (k < 1 || k > spec.r) throw Error(ErrorCode::InvalidSpec, "k grid entries must lie in [1, r]");
  SimulationReport rep;
  rep.study = "bias_sweep";
  rep.spec = spec;
  rep.reps = reps;
  timed(rep, [&] {
    const int nk = static_cast<int>(k_grid.size());
    std::vector<FitRecord> um(reps), em(reps);
    std::vector<std::vector<FitRecord>> cm(nk, std::vector<FitRecord>(reps));
    const int u = opts.fixed_dim.value_or(spec.u);
    parallel_for(reps, threads_or_default(opts), [&](int i) {
      const GeneratedData g = generate_scenario(spec, i);
      const EnvelopeFit fu = fit_um(g.data);
      const EnvelopeFit fe = fit_em(g.data, u, opts.fit);
      um[i] = {fu.beta, mean_diag(fu.avar_beta), -1.0};
      em[i] = {fe.beta, mean_diag(fe.avar_beta), -1.0};
      for (int j = 0; j < nk; ++j) {
        const EnvelopeFit fc = fit_cm(g.data, g.truth.O.leftCols(k_grid[j]), InterceptMode::model3);
        cm[j][i] = {fc.beta, mean_diag(fc.avar_beta), -1.0};
      }
    });
    const MatrixXd truth = generate_scenario(spec, 0).truth.beta;
    const EstimatorSummary su = summarize("um", um, truth, spec.n);
    const EstimatorSummary se = summarize("em", em, truth, spec.n);
    rep.estimators.push_back(su);
    rep.estimators.push_back(se);
    for (int j = 0; j < nk; ++j) {
      const EstimatorSummary sc = summarize("cm_k" + std::to_string(k_grid[j]), cm[j], truth, spec.n);
      rep.estimators.push_back(sc);
      const double x = k_grid[j];
      rep.curve.push_back({"cm", x, sc.mean_mse, sc.mse_quantiles[1], sc.mse_quantiles[3]});
      rep.curve.push_back({"em", x, se.mean_mse, se.mse_quantiles[1], se.mse_quantiles[3]});
      rep.curve.push_back({"um", x, su.mean_mse, su.mse_quantiles[1], su.mse_quantiles[3]});
    }
    rep.dim_frequency[u] = reps;
  });
  return rep;
}

SimulationReport run_ecm_study(const ScenarioSpec& spec, int reps, const StudyOptions& opts) {
  validate_spec(spec);
  check_reps(reps);
  SimulationReport rep;
  rep.study = "ecm";
  rep.spec = spec;
  rep.reps = reps;
  timed(rep, [&] {
    std::vector<FitRecord> cm(reps), ecm(reps);
    std::vector<int> dims(reps);
    parallel_for(reps, threads_or_default(opts), [&](int i) {
      const GeneratedData g = generate_scenario(spec, i);
      const EnvelopeFit fc = fit_cm(g.data, g.truth.U, InterceptMode::model3);
      const int u = opts.fixed_dim.value_or(spec.u);
      const EnvelopeFit fe = fit_ecm(g.data, g.truth.U, u, InterceptMode::model3, opts.fit);
      cm[i] = {fc.beta, mean_diag(fc.avar_beta), -1.0};
      double dist = -1.0;
      if (fe.basis.cols() == g.truth.Gamma.cols() && fe.basis.cols() > 0)
        dist = subspace_distance(SemiOrthBasis(fe.basis), SemiOrthBasis::of_span(g.truth.Gamma));
      ecm[i] = {fe.beta, mean_diag(fe.avar_beta), dist};
      dims[i] = u;
    });
    const MatrixXd truth = generate_scenario(spec, 0).truth.beta;
    rep.estimators.push_back(summarize("cm", cm, truth, spec.n));
    rep.estimators.push_back(summarize("ecm", ecm, truth, spec.n));
    for (int d : dims) ++rep.dim_frequency[d];
  });
  return rep;
}

SimulationReport run_size_calibration(const ScenarioSpec& spec, int reps, const StudyOptions& opts) {
  validate_spec(spec);
  check_reps(reps);
  if (spec.scenario_id != ScenarioId::null_test)
    throw Error(ErrorCode::InvalidSpec, "size calibration needs the null_test design");
  SimulationReport rep;
  rep.study = "size_calibration";
  rep.spec = spec;
  rep.reps = reps;
  rep.df = spec.u * spec.k2;
  timed(rep, [&] {
    std::vector<double> stats(reps);
    std::vector<double> pvals(reps);
    parallel_for(reps, threads_or_default(opts), [&](int i) {
      const GeneratedData g = generate_scenario(spec, i);
      const TestResult t = test_rows(g.data, g.truth.U, spec.u, spec.k2, InterceptMode::model3, opts.fit);
      stats[i] = t.statistic;
      pvals[i] = t.p_value;
    });
    rep.statistics = stats;
    int rejections = 0;
    double total = 0.0;
    for (int i = 0; i < reps; ++i) {
      if (pvals[i] < 0.05) ++rejections;
      total += stats[i];
    }
    rep.rejection_rate = static_cast<double>(rejections) / reps;
    rep.mean_statistic = total / reps;
    rep.ks_distance = ks_distance_chi2(stats, rep.df);
  });
  return rep;
}

double ks_distance_chi2(std::vector<double> sample, int df) {
  if (sample.empty()) return 0.0;
  std::sort(sample.begin(), sample.end());
  const boost::math::chi_squared dist(df);
  const double m = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = sample[i] > 0.0 ? boost::math::cdf(dist, sample[i]) : 0.0;
    d = std::max({d, (i + 1) / m - f, f - i / m});
  }
  return d;
}

}  // namespace envcore
