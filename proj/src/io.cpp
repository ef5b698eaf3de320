#include "envcore/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "envcore/errors.hpp"

namespace envcore {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& msg) {
  throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

Json vector_to_json(const VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from_json(const Json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

Json sym_to_json(const SymMatrix& s) { return matrix_to_json(s.matrix()); }
SymMatrix sym_from_json(const Json& j) { return SymMatrix::symmetrize(matrix_from_json(j)); }

VectorXd diagonal_of(const SymMatrix& s) {
  return s.dim() ? VectorXd(s.matrix().diagonal()) : VectorXd();
}

Json spec_to_json(const ScenarioSpec& s) {
  Json j;
  j["scenario_id"] = to_string(s.scenario_id);
  j["n"] = s.n;
  j["r"] = s.r;
  j["p"] = s.p;
  j["u"] = s.u;
  j["q"] = s.q;
  j["q1"] = s.q1;
  j["omega_eigs"] = s.omega_eigs;
  j["omega0_eigs"] = s.omega0_eigs;
  j["predictor_corr"] = s.predictor_corr == PredictorCorr::factor_model ? "factor_model" : "compound_symmetric";
  j["rho"] = s.rho;
  j["seed"] = s.seed;
  j["k2"] = s.k2;
  j["row_signal"] = s.row_signal;
  j["beta_scale"] = s.beta_scale;
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text, const std::string& path) {
  CsvTable t;
  t.path = path;
  std::vector<std::vector<std::string>> records;
  std::vector<int> starts;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, field_started = false, any = false;
  int line = 1, rec_line = 1;
  std::size_t i = 0;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  auto end_record = [&] {
    rec.push_back(field);
    const bool blank = rec.size() == 1 && trim(rec[0]).empty() && !field_started;
    if (!blank) {
      records.push_back(rec);
      starts.push_back(rec_line);
    }
    rec.clear();
    field.clear();
    field_started = false;
    any = false;
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (!any) rec_line = line;
    any = true;
    if (c == '"') {
      if (!trim(field).empty()) parse_fail(path, line, "quote inside an unquoted field");
      field.clear();
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      rec.push_back(field);
      field.clear();
      field_started = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      ++line;
    } else {
      field += c;
    }
  }
  if (quoted) parse_fail(path, line, "unterminated quoted field");
  if (any) end_record();
  if (records.empty()) parse_fail(path, 1, "missing header row");
  for (auto& h : records[0]) h = trim(h);
  t.header = records[0];
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      parse_fail(path, starts[r], "expected " + std::to_string(t.header.size()) + " fields, found " +
                                      std::to_string(records[r].size()));
    t.rows.push_back(records[r]);
    t.lines.push_back(starts[r]);
  }
  return t;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidData, path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidData, path + ": cannot write file");
  out << text;
  if (!out) throw Error(ErrorCode::InvalidData, path + ": write failed");
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text(path), path); }

std::vector<std::string> select_columns(const CsvTable& t, const std::string& selector) {
  std::vector<std::string> out;
  if (selector.rfind("prefix:", 0) == 0) {
    const std::string pre = selector.substr(7);
    for (const auto& h : t.header)
      if (h.rfind(pre, 0) == 0) out.push_back(h);
    if (out.empty()) throw Error(ErrorCode::InvalidData, t.path + ": no column starts with '" + pre + "'");
    return out;
  }
  std::stringstream ss(selector);
  std::string name;
  while (std::getline(ss, name, ',')) {
    name = trim(name);
    if (name.empty()) continue;
    if (t.column(name) < 0) throw Error(ErrorCode::InvalidData, t.path + ": no column named '" + name + "'");
    out.push_back(name);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidData, t.path + ": empty column selection");
  return out;
}

MatrixXd numeric_columns(const CsvTable& t, const std::vector<std::string>& names) {
  MatrixXd m(t.rows.size(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const int c = t.column(names[j]);
    if (c < 0) throw Error(ErrorCode::InvalidData, t.path + ": no column named '" + names[j] + "'");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      double v = 0.0;
      if (!parse_number(t.rows[i][c], v))
        throw Error(ErrorCode::InvalidData, t.path + ":" + std::to_string(t.lines[i]) + ": column '" + names[j] +
                                                "': '" + t.rows[i][c] + "' is not a finite number");
      m(i, j) = v;
    }
  }
  return m;
}

MatrixXd read_matrix_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  return numeric_columns(t, t.header);
}

Dataset load_dataset(const std::string& path, const std::string& predictors,
                     const std::optional<std::string>& responses) {
  const CsvTable t = read_csv(path);
  const std::vector<std::string> xs = select_columns(t, predictors);
  std::vector<std::string> ys;
  if (responses) {
    ys = select_columns(t, *responses);
  } else {
    for (const auto& h : t.header)
      if (std::find(xs.begin(), xs.end(), h) == xs.end()) ys.push_back(h);
  }
  for (const auto& y : ys)
    if (std::find(xs.begin(), xs.end(), y) != xs.end())
      throw Error(ErrorCode::InvalidData, path + ": column '" + y + "' is both a response and a predictor");
  if (ys.empty()) throw Error(ErrorCode::InvalidData, path + ": no response columns");
  return make_dataset(numeric_columns(t, ys), numeric_columns(t, xs), ys, xs);
}

MatrixXd build_U(const std::string& spec, const VectorXd& times) {
  const int r = static_cast<int>(times.size());
  auto int_arg = [&](const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
      throw Error(ErrorCode::ParseError, "U builder '" + spec + "': bad integer argument");
    return v;
  };
  if (spec == "identity") return MatrixXd::Identity(r, r);
  if (spec.rfind("poly:", 0) == 0) {
    const int d = int_arg(spec.substr(5));
    MatrixXd U(r, d + 1);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j <= d; ++j) U(i, j) = std::pow(times(i), j);
    return U;
  }
  if (spec.rfind("trig:", 0) == 0) {
    double period = 0.0;
    if (!parse_number(spec.substr(5), period) || !(period > 0.0))
      throw Error(ErrorCode::ParseError, "U builder '" + spec + "': period must be positive");
    MatrixXd U(r, 5);
    for (int i = 0; i < r; ++i) {
      const double s = times(i) / period;
      U.row(i) << 1.0, s, s * s, std::cos(2.0 * std::numbers::pi * s), std::sin(2.0 * std::numbers::pi * s);
    }
    return U;
  }
  const MatrixXd U = read_matrix_csv(spec);
  if (U.rows() != r)
    throw Error(ErrorCode::DimensionMismatch, spec + ": U has " + std::to_string(U.rows()) + " rows but r = " +
                                                  std::to_string(r));
  return U;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json matrix_to_json(const MatrixXd& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json vals = Json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int c = 0; c < m.cols(); ++c) vals.push_back(m(i, c));
  j["values"] = std::move(vals);
  return j;
}

MatrixXd matrix_from_json(const Json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const Json& vals = j.at("values");
  if (static_cast<int>(vals.size()) != rows * cols)
    throw Error(ErrorCode::ParseError, "matrix entry count does not match its shape");
  MatrixXd m(rows, cols);
  for (int i = 0, k = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = vals[k++].get<double>();
  return m;
}

Json fit_to_json(const EnvelopeFit& f) {
  Json j;
  j["model"] = to_string(f.kind);
  j["intercept_mode"] = to_string(f.intercept_mode);
  j["n"] = f.n;
  j["r"] = f.r;
  j["p"] = f.p;
  j["k"] = f.k;
  j["dimension"] = f.dim;
  j["loglik"] = f.loglik;
  j["n_params"] = f.n_params;
  j["bic"] = f.bic();
  j["objective"] = f.objective;
  j["sweeps"] = f.sweeps;
  j["avar_beta_diagonal"] = vector_to_json(diagonal_of(f.avar_beta));
  j["beta"] = matrix_to_json(f.beta);
  j["beta0"] = vector_to_json(f.beta0);
  j["alpha"] = matrix_to_json(f.alpha);
  j["alpha0"] = vector_to_json(f.alpha0);
  j["U"] = matrix_to_json(f.U);
  j["basis"] = matrix_to_json(f.basis);
  j["Lambda"] = vector_to_json(f.Lambda);
  j["Omega"] = sym_to_json(f.Omega);
  j["Omega0"] = sym_to_json(f.Omega0);
  j["Sigma"] = sym_to_json(f.Sigma);
  j["Sigma_DS"] = sym_to_json(f.Sigma_DS);
  j["phi_DS"] = matrix_to_json(f.phi_DS);
  j["avar_beta"] = sym_to_json(f.avar_beta);
  j["avar_alpha"] = sym_to_json(f.avar_alpha);
  j["notes"] = f.notes;
  return j;
}

EnvelopeFit fit_from_json(const Json& j) {
  try {
    EnvelopeFit f;
    f.kind = estimator_kind_from_string(j.at("model").get<std::string>());
    f.intercept_mode = intercept_mode_from_string(j.at("intercept_mode").get<std::string>());
    f.n = j.at("n").get<int>();
    f.r = j.at("r").get<int>();
    f.p = j.at("p").get<int>();
    f.k = j.at("k").get<int>();
    f.dim = j.at("dimension").get<int>();
    f.loglik = j.at("loglik").get<double>();
    f.n_params = j.at("n_params").get<int>();
    f.objective = j.at("objective").get<double>();
    f.sweeps = j.at("sweeps").get<int>();
    f.beta = matrix_from_json(j.at("beta"));
    f.beta0 = vector_from_json(j.at("beta0"));
    f.alpha = matrix_from_json(j.at("alpha"));
    f.alpha0 = vector_from_json(j.at("alpha0"));
    f.U = matrix_from_json(j.at("U"));
    f.basis = matrix_from_json(j.at("basis"));
    f.Lambda = vector_from_json(j.at("Lambda"));
    f.Omega = sym_from_json(j.at("Omega"));
    f.Omega0 = sym_from_json(j.at("Omega0"));
    f.Sigma = sym_from_json(j.at("Sigma"));
    f.Sigma_DS = sym_from_json(j.at("Sigma_DS"));
    f.phi_DS = matrix_from_json(j.at("phi_DS"));
    f.avar_beta = sym_from_json(j.at("avar_beta"));
    f.avar_alpha = sym_from_json(j.at("avar_alpha"));
    f.notes = j.at("notes").get<std::vector<std::string>>();
    return f;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("fit record: ") + e.what());
  }
}

Json selection_to_json(const DimensionSelection& s) {
  Json j;
  j["kind"] = to_string(s.kind);
  j["selected"] = s.selected;
  Json trace = Json::array();
  for (const auto& c : s.trace) {
    Json e;
    e["dimension"] = c.dim;
    e["ok"] = c.ok;
    if (c.ok) {
      e["loglik"] = c.loglik;
      e["n_params"] = c.n_params;
      e["bic"] = c.bic;
    } else {
      e["error"] = c.error;
    }
    trace.push_back(std::move(e));
  }
  j["trace"] = std::move(trace);
  j["warnings"] = s.warnings;
  return j;
}

Json test_to_json(const TestResult& t) {
  Json j;
  j["kind"] = to_string(t.kind);
  j["statistic"] = t.statistic;
  j["df"] = t.df;
  j["p_value"] = t.p_value;
  j["loglik_null"] = t.loglik_null;
  j["loglik_alt"] = t.loglik_alt;
  j["clipped"] = t.clipped;
  return j;
}

Json contrast_to_json(const ContrastFit& c) {
  Json j;
  j["p1"] = c.p1;
  j["u1"] = c.u1;
  j["c1"] = matrix_to_json(c.c1);
  j["c2"] = matrix_to_json(c.c2);
  j["alpha1"] = matrix_to_json(c.alpha1);
  j["alpha1_cm"] = matrix_to_json(c.alpha1_cm);
  j["basis"] = matrix_to_json(c.basis);
  j["avar_alpha1"] = sym_to_json(c.avar_alpha1);
  j["avar_Ualpha1"] = sym_to_json(c.avar_Ualpha1);
  j["avar_alpha1_cm"] = sym_to_json(c.avar_alpha1_cm);
  j["avar_Ualpha1_cm"] = sym_to_json(c.avar_Ualpha1_cm);
  j["loglik"] = c.loglik;
  j["objective"] = c.objective;
  return j;
}

Json profile_to_json(const ProfileEstimate& p, int n) {
  Json j;
  j["x_new"] = vector_to_json(p.x_new);
  j["mean"] = vector_to_json(p.mean);
  j["se"] = vector_to_json((diagonal_of(p.avar) / n).cwiseMax(0.0).cwiseSqrt());
  j["mean_cm"] = vector_to_json(p.mean_cm);
  j["se_cm"] = vector_to_json((diagonal_of(p.avar_cm) / n).cwiseMax(0.0).cwiseSqrt());
  j["avar"] = sym_to_json(p.avar);
  j["avar_cm"] = sym_to_json(p.avar_cm);
  return j;
}

Json report_to_json(const SimulationReport& r) {
  Json j;
  j["study"] = r.study;
  j["reps"] = r.reps;
  j["spec"] = spec_to_json(r.spec);
  Json ests = Json::array();
  for (const auto& e : r.estimators) {
    Json o;
    o["name"] = e.name;
    o["reps"] = e.reps;
    o["mean_mse"] = e.mean_mse;
    o["mse_quantiles"] = e.mse_quantiles;
    o["mean_avar"] = e.mean_avar;
    o["mc_variance"] = e.mc_variance;
    o["pooled_bias"] = e.pooled_bias;
    o["pooled_bias_se"] = e.pooled_bias_se;
    o["max_entry_bias_z"] = e.max_entry_bias_z;
    o["mean_subspace_distance"] = e.mean_subspace_distance;
    ests.push_back(std::move(o));
  }
  j["estimators"] = std::move(ests);
  Json freq = Json::object();
  for (const auto& [d, c] : r.dim_frequency) freq[std::to_string(d)] = c;
  j["dim_frequency"] = std::move(freq);
  if (!r.curve.empty()) {
    Json pts = Json::array();
    for (const auto& c : r.curve) pts.push_back({{"series", c.series}, {"x", c.x}, {"y", c.y}, {"lo", c.lo}, {"hi", c.hi}});
    j["curve"] = std::move(pts);
  }
  if (r.study == "size_calibration") {
    j["df"] = r.df;
    j["rejection_rate"] = r.rejection_rate;
    j["mean_statistic"] = r.mean_statistic;
    j["ks_distance"] = r.ks_distance;
    j["statistics"] = r.statistics;
  }
  j["warnings"] = r.warnings;
  return j;
}

std::string report_table_csv(const SimulationReport& r) {
  std::ostringstream os;
  os << "estimator,reps,mean_mse,mse_min,mse_q25,mse_median,mse_q75,mse_max,mean_avar,mc_variance,pooled_bias,"
        "pooled_bias_se,max_entry_bias_z,mean_subspace_distance\n";
  for (const auto& e : r.estimators) {
    os << csv_field(e.name) << ',' << e.reps << ',' << format_double(e.mean_mse);
    for (double q : e.mse_quantiles) os << ',' << format_double(q);
    os << ',' << format_double(e.mean_avar) << ',' << format_double(e.mc_variance) << ','
       << format_double(e.pooled_bias) << ',' << format_double(e.pooled_bias_se) << ','
       << format_double(e.max_entry_bias_z) << ',' << format_double(e.mean_subspace_distance) << '\n';
  }
  return os.str();
}

std::string fit_table_csv(const EnvelopeFit& fit, const std::vector<std::string>& responses,
                          const std::vector<std::string>& predictors) {
  const MatrixXd pv = wald_pvalues(fit);
  std::ostringstream os;
  os << "response,predictor,beta,avar,se,p_value\n";
  for (int j = 0; j < fit.p; ++j)
    for (int i = 0; i < fit.r; ++i) {
      const double a = fit.avar_beta(j * fit.r + i, j * fit.r + i);
      os << csv_field(responses[i]) << ',' << csv_field(predictors[j]) << ',' << format_double(fit.beta(i, j)) << ','
         << format_double(a) << ',' << format_double(std::sqrt(std::max(a, 0.0) / fit.n)) << ','
         << format_double(pv(i, j)) << '\n';
    }
  return os.str();
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::ostringstream os;
  os << "series,x,y,lo,hi\n";
  for (const auto& c : points)
    os << csv_field(c.series) << ',' << format_double(c.x) << ',' << format_double(c.y) << ','
       << format_double(c.lo) << ',' << format_double(c.hi) << '\n';
  return os.str();
}

}  // namespace envcore
