#include <CLI11.hpp>
#include <charconv>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "envcore/errors.hpp"
#include "envcore/fixtures.hpp"
#include "envcore/inference.hpp"
#include "envcore/io.hpp"
#include "envcore/simulation.hpp"

using namespace envcore;
namespace fs = std::filesystem;

namespace {

constexpr int kExitData = 2;
constexpr int kExitConvergence = 3;

std::optional<int> parse_dim(const std::string& s, const char* flag) {
  if (s == "bic") return std::nullopt;
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
    throw Error(ErrorCode::InvalidSpec, std::string(flag) + " expects a non-negative integer or 'bic', got '" + s + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::InvalidSpec, "--tol " + key + ": '" + s + "' is not a number");
  return v;
}

void apply_tolerances(const std::vector<std::string>& items, FitOptions& o) {
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidSpec, "--tol expects KEY=VAL, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const double v = parse_real(key, item.substr(eq + 1));
    if (key == "tol") o.optimizer.tol = v;
    else if (key == "max_sweeps") o.optimizer.max_sweeps = static_cast<int>(v);
    else if (key == "n_random") o.optimizer.n_random = static_cast<int>(v);
    else if (key == "start_seed") o.optimizer.seed = static_cast<std::uint64_t>(v);
    else if (key == "jitter") o.optimizer.jitter = v != 0.0;
    else if (key == "jitter_delta") o.optimizer.jitter_delta = v;
    else if (key == "inner_max_iter") o.optimizer.inner_max_iter = static_cast<int>(v);
    else if (key == "inner_grad_tol") o.optimizer.inner_grad_tol = v;
    else if (key == "scale_tol") o.scales.tol = v;
    else if (key == "max_outer") o.scales.max_outer = static_cast<int>(v);
    else if (key == "log_bracket") o.scales.log_bracket = v;
    else if (key == "grid_points") o.scales.grid_points = static_cast<int>(v);
    else if (key == "golden_tol") o.scales.golden_tol = v;
    else if (key == "scale_grad_tol") o.scales.grad_tol = v;
    else if (key == "pinv_cutoff") o.pinv_cutoff = v;
    else throw Error(ErrorCode::InvalidSpec, "--tol: unknown key '" + key + "'");
  }
}

VectorXd parse_times(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(parse_real("--times", tok));
  return Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

struct FitArgs {
  std::string data = "dental";
  std::string predictors, responses, model = "um", u, v, U, times, intercept = "model3";
  std::string contrast, profile, out = ".";
  std::optional<int> test_rows, u1;
  std::vector<std::string> tol;
  bool keep_outlier = false;
};

struct SimArgs {
  std::string scenario = "s1", u, out = ".";
  int reps = 100;
  std::uint64_t seed = 7;
  std::optional<int> n, threads;
  std::vector<std::string> tol;
};

int run_fit(const FitArgs& a) {
  FitOptions opts;
  apply_tolerances(a.tol, opts);
  const bool dental = a.data == "dental";
  Dataset data;
  if (dental) {
    data = dental_dataset(!a.keep_outlier);
  } else {
    if (a.predictors.empty()) throw Error(ErrorCode::InvalidSpec, "--predictors is required with a CSV file");
    data = load_dataset(a.data, a.predictors,
                        a.responses.empty() ? std::nullopt : std::optional<std::string>(a.responses));
  }
  for (const auto& w : dataset_warnings(data)) std::cerr << "warning: " << w << "\n";

  const EstimatorKind kind = estimator_kind_from_string(a.model);
  const InterceptMode mode = intercept_mode_from_string(a.intercept);
  VectorXd times;
  if (!a.times.empty()) times = parse_times(a.times);
  else if (dental) times = dental_ages();
  else times = VectorXd::LinSpaced(data.r(), 1.0, data.r());
  if (times.size() != data.r())
    throw Error(ErrorCode::DimensionMismatch, "--times has " + std::to_string(times.size()) +
                                                  " entries but there are " + std::to_string(data.r()) + " responses");
  std::string uspec = a.U;
  if (uspec.empty() && dental) uspec = "poly:1";
  const bool needs_u = kind == EstimatorKind::cm || kind == EstimatorKind::ecm || kind == EstimatorKind::secm ||
                       !a.contrast.empty() || !a.profile.empty();
  if (needs_u && uspec.empty()) throw Error(ErrorCode::InvalidSpec, "--U is required for this command");
  const MatrixXd U = uspec.empty() ? MatrixXd() : build_U(uspec, times);

  Json doc;
  doc["data"] = {{"source", dental ? std::string("dental") : a.data},
                 {"n", data.n()},
                 {"responses", data.response_names},
                 {"predictors", data.predictor_names}};
  if (!uspec.empty()) doc["U_spec"] = uspec;

  EnvelopeFit fit;
  std::optional<DimensionSelection> sel;
  if (!a.u.empty() && !a.v.empty()) throw Error(ErrorCode::InvalidSpec, "give only one of --u and --v");
  const std::string dim_arg = !a.v.empty() ? a.v : (!a.u.empty() ? a.u : "bic");
  auto choose = [&](EstimatorKind k) -> int {
    const std::optional<int> d = parse_dim(dim_arg, a.v.empty() ? "--u" : "--v");
    if (d) return *d;
    sel = select_dimension(data, k, k == EstimatorKind::em ? std::nullopt : std::optional<MatrixXd>(U), mode, opts);
    for (const auto& w : sel->warnings) std::cerr << "warning: " << w << "\n";
    return sel->selected;
  };
  switch (kind) {
    case EstimatorKind::um: fit = fit_um(data); break;
    case EstimatorKind::cm: fit = fit_cm(data, U, mode); break;
    case EstimatorKind::em: fit = fit_em(data, choose(kind), opts); break;
    case EstimatorKind::ecm: fit = fit_ecm(data, U, choose(kind), mode, opts); break;
    case EstimatorKind::secm: fit = fit_secm(data, U, choose(kind), mode, opts); break;
  }
  doc["fit"] = fit_to_json(fit);
  if (sel) doc["dimension_selection"] = selection_to_json(*sel);

  if (a.test_rows) {
    if (kind != EstimatorKind::ecm) throw Error(ErrorCode::InvalidSpec, "--test-rows needs --model ecm");
    const TestResult t = test_rows(data, U, fit.dim, *a.test_rows, mode, opts);
    if (t.clipped) std::cerr << "warning: negative likelihood-ratio statistic clipped to 0\n";
    doc["row_test"] = test_to_json(t);
  }
  const int k = static_cast<int>(U.cols());
  const int u1 = a.u1.value_or(kind == EstimatorKind::ecm ? fit.dim : k);
  if (!a.contrast.empty()) doc["contrast"] = contrast_to_json(fit_contrast(data, U, read_matrix_csv(a.contrast), u1, mode, opts));

  std::vector<CurvePoint> profile_points;
  if (!a.profile.empty()) {
    const CsvTable t = read_csv(a.profile);
    const MatrixXd xs = numeric_columns(t, data.predictor_names);
    Json profiles = Json::array();
    for (int i = 0; i < xs.rows(); ++i) {
      const ProfileEstimate pe = estimate_profile(data, U, xs.row(i).transpose(), u1, opts);
      profiles.push_back(profile_to_json(pe, data.n()));
      const std::string tag = "_" + std::to_string(i + 1);
      for (int j = 0; j < data.r(); ++j) {
        const double se = std::sqrt(std::max(pe.avar(j, j), 0.0) / data.n());
        const double se_cm = std::sqrt(std::max(pe.avar_cm(j, j), 0.0) / data.n());
        profile_points.push_back({"envelope" + tag, times(j), pe.mean(j), pe.mean(j) - 1.96 * se, pe.mean(j) + 1.96 * se});
        profile_points.push_back({"cm" + tag, times(j), pe.mean_cm(j), pe.mean_cm(j) - 1.96 * se_cm,
                                  pe.mean_cm(j) + 1.96 * se_cm});
      }
    }
    doc["profiles"] = std::move(profiles);
  }

  fs::create_directories(a.out);
  write_text((fs::path(a.out) / "fit.json").string(), dump(doc));
  write_text((fs::path(a.out) / "tables.csv").string(),
             fit_table_csv(fit, data.response_names, data.predictor_names));
  if (!profile_points.empty()) write_text((fs::path(a.out) / "profile.csv").string(), curve_csv(profile_points));
  std::cout << to_string(fit.kind) << " dimension=" << fit.dim << " loglik=" << format_double(fit.loglik)
            << " bic=" << format_double(fit.bic()) << "\n";
  return 0;
}

int run_simulate(const SimArgs& a) {
  ScenarioSpec spec = default_spec(scenario_from_string(a.scenario), a.seed);
  if (a.n) spec.n = *a.n;
  StudyOptions so;
  apply_tolerances(a.tol, so.fit);
  if (a.threads) so.threads = *a.threads;
  if (!a.u.empty()) so.fixed_dim = parse_dim(a.u, "--u");

  SimulationReport rep;
  switch (spec.scenario_id) {
    case ScenarioId::bias_sweep: {
      std::vector<int> grid;
      for (int k = 1; k <= spec.r; ++k) grid.push_back(k);
      rep = run_bias_sweep(spec, grid, a.reps, so);
      break;
    }
    case ScenarioId::ecm_star: rep = run_ecm_study(spec, a.reps, so); break;
    case ScenarioId::null_test: rep = run_size_calibration(spec, a.reps, so); break;
    default: rep = run_efficiency_study(spec, a.reps, so); break;
  }
  fs::create_directories(a.out);
  write_text((fs::path(a.out) / "report.json").string(), dump(report_to_json(rep)));
  write_text((fs::path(a.out) / "tables.csv").string(), report_table_csv(rep));
  if (!rep.curve.empty()) write_text((fs::path(a.out) / "mse_vs_k.csv").string(), curve_csv(rep.curve));
  if (!rep.statistics.empty()) {
    std::vector<CurvePoint> pts;
    for (std::size_t i = 0; i < rep.statistics.size(); ++i)
      pts.push_back({"lrt_statistic", static_cast<double>(i + 1), rep.statistics[i], 0.0, 0.0});
    write_text((fs::path(a.out) / "statistics.csv").string(), curve_csv(pts));
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << rep.study << " reps=" << rep.reps << " wall_clock_seconds=" << rep.wall_clock_seconds << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Envelope and constrained multivariate regression"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit an estimator and write fit.json and tables.csv");
  fit->add_option("--data", fa.data, "CSV file with a header row, or 'dental' for the bundled fixture");
  fit->add_option("--predictors", fa.predictors, "Predictor columns: comma list or prefix:NAME");
  fit->add_option("--responses", fa.responses, "Response columns (default: all non-predictor columns)");
  fit->add_option("--model", fa.model, "um, cm, em, ecm or secm")->check(CLI::IsMember({"um", "cm", "em", "ecm", "secm"}));
  fit->add_option("--u", fa.u, "Envelope dimension or 'bic' (default bic)");
  fit->add_option("--v", fa.v, "secm dimension or 'bic'");
  fit->add_option("--U", fa.U, "file, poly:d, trig:T or identity (dental default poly:1)");
  fit->add_option("--times", fa.times, "Comma-separated time points for poly/trig builders");
  fit->add_option("--intercept", fa.intercept, "model2 or model3")->check(CLI::IsMember({"model2", "model3"}));
  fit->add_option("--test-rows", fa.test_rows, "Test that the last k2 rows of alpha vanish (ecm)");
  fit->add_option("--contrast", fa.contrast, "CSV holding the p x p1 contrast matrix");
  fit->add_option("--u1", fa.u1, "Contrast envelope dimension (default: the ecm dimension, else k)");
  fit->add_option("--profile", fa.profile, "CSV of new predictor rows, header = predictor names");
  fit->add_option("--out", fa.out, "Output directory");
  fit->add_option("--tol", fa.tol, "Tolerance override KEY=VAL (repeatable)");
  fit->add_flag("--keep-outlier", fa.keep_outlier, "Dental fixture: keep the removed male case");

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo study and write report.json and tables.csv");
  sim->add_option("--scenario", sa.scenario, "s1, s2, bias_sweep, ecm_star, null_test or custom")
      ->check(CLI::IsMember({"s1", "s2", "bias_sweep", "ecm_star", "null_test", "custom"}));
  sim->add_option("--reps", sa.reps, "Replications")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sa.seed, "Master seed");
  sim->add_option("--n", sa.n, "Override the sample size")->check(CLI::PositiveNumber);
  sim->add_option("--u", sa.u, "Envelope dimension or 'bic' (efficiency studies default to bic)");
  sim->add_option("--threads", sa.threads, "Worker threads (default: ENVCORE_THREADS or hardware)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--out", sa.out, "Output directory");
  sim->add_option("--tol", sa.tol, "Tolerance override KEY=VAL (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitData;
  }
  try {
    if (*fit) return run_fit(fa);
    return run_simulate(sa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NoConvergence ? kExitConvergence : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
