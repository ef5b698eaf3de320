#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "envcore/estimators.hpp"

namespace envcore {

enum class ScenarioId { s1, s2, ecm_star, bias_sweep, null_test, custom };
enum class PredictorCorr { factor_model, compound_symmetric };

const char* to_string(ScenarioId id);
ScenarioId scenario_from_string(const std::string& s);

// s1/s2/bias_sweep/custom: envelope design with U = (Γ,Γ0)bdiag(K1, (I_q2; 0)), dim(U) = q.
// ecm_star: u = u*, q = k; Σ_{D|S} = bdiag(Ω*, Ω0*), Y_S ~ N(0, I).
// null_test: dim(U) = q, envelope Φ = (Φ1; row_signal·1)/norm over the last k2 rows.
struct ScenarioSpec {
  ScenarioId scenario_id = ScenarioId::s1;
  int n = 5000, r = 20, p = 8, u = 6, q = 15, q1 = 4;
  std::vector<double> omega_eigs, omega0_eigs;
  PredictorCorr predictor_corr = PredictorCorr::factor_model;
  double rho = 0.0;
  std::uint64_t seed = 7;
  int k2 = 1;               // null_test: trailing rows under test
  double row_signal = 0.0;  // null_test: 0 is the null
  double beta_scale = 1.0;  // multiplies η; 0 gives β = 0
};

ScenarioSpec default_spec(ScenarioId id, std::uint64_t seed = 7);
void validate_spec(const ScenarioSpec& spec);

struct TruthRecord {
  MatrixXd beta;   // r x p
  MatrixXd Sigma;  // r x r
  MatrixXd U;      // r x q (or r x k)
  MatrixXd O;      // (Γ, Γ0) for envelope designs
  MatrixXd Gamma;  // r x u envelope basis (em designs) or k x u basis of α's envelope
  MatrixXd alpha;  // coordinates of β in U
  MatrixXd Sigma_X;
  int u = 0;
};

struct GeneratedData {
  Dataset data;
  TruthRecord truth;
};

// Deterministic in (spec, replicate). X and the structural parameters depend
// on the seed only; the responses depend on (seed, replicate).
GeneratedData generate_scenario(const ScenarioSpec& spec, int replicate);

// Independent generator for (seed, replicate, stream), SplitMix64-keyed.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream);
MatrixXd standard_normal(std::mt19937_64& rng, int rows, int cols);
// Haar-distributed orthogonal matrix via sign-corrected QR.
MatrixXd random_orthogonal(std::mt19937_64& rng, int dim);

// Worker count from ENVCORE_THREADS (default: hardware concurrency, at least 1).
int configured_threads();
// Runs body(i) for i in [0, count); rethrows the lowest-index failure.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

struct EstimatorSummary {
  std::string name;
  int reps = 0;
  double mean_mse = 0.0;
  std::vector<double> mse_quantiles;  // min, q25, median, q75, max
  double mean_avar = 0.0;             // mean plug-in avar of √n β̂ entries
  double mc_variance = 0.0;           // mean over entries of the MC variance of √n β̂_ij
  double pooled_bias = 0.0;           // mean of β̂_ij − β_ij over entries and reps
  double pooled_bias_se = 0.0;        // MC standard error of pooled_bias
  double max_entry_bias_z = 0.0;      // max_ij |mean bias_ij| / MC SE_ij
  double mean_subspace_distance = -1.0;  // em: vs the true envelope; -1 when not applicable
};

struct CurvePoint {
  std::string series;
  double x = 0.0, y = 0.0, lo = 0.0, hi = 0.0;
};

struct SimulationReport {
  std::string study;
  ScenarioSpec spec;
  int reps = 0;
  std::vector<EstimatorSummary> estimators;
  std::map<int, int> dim_frequency;  // selected dimension -> count
  std::vector<CurvePoint> curve;     // bias sweep MSE(k) and reference lines
  // size calibration
  int df = 0;
  std::vector<double> statistics;
  double ks_distance = 0.0;
  double rejection_rate = 0.0;
  double mean_statistic = 0.0;
  std::vector<std::string> warnings;
  double wall_clock_seconds = 0.0;  // kept out of serialized reports

  const EstimatorSummary& estimator(const std::string& name) const;
};

struct StudyOptions {
  int threads = 0;               // 0: configured_threads()
  std::optional<int> fixed_dim;  // envelope dimension; BIC when empty
  FitOptions fit;
};

SimulationReport run_efficiency_study(const ScenarioSpec& spec, int reps, const StudyOptions& opts = {});
SimulationReport run_bias_sweep(const ScenarioSpec& spec, const std::vector<int>& k_grid, int reps,
                                const StudyOptions& opts = {});
SimulationReport run_ecm_study(const ScenarioSpec& spec, int reps, const StudyOptions& opts = {});
SimulationReport run_size_calibration(const ScenarioSpec& spec, int reps, const StudyOptions& opts = {});

// Kolmogorov–Smirnov distance between a sample and χ²(df).
double ks_distance_chi2(std::vector<double> sample, int df);

}  // namespace envcore
