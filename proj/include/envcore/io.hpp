#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "envcore/estimators.hpp"
#include "envcore/inference.hpp"
#include "envcore/simulation.hpp"

namespace envcore {

using Json = nlohmann::ordered_json;

// RFC-4180 table with a header row. Line numbers are 1-based file lines.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // file line of each row

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable parse_csv(const std::string& text, const std::string& path = "<memory>");
CsvTable read_csv(const std::string& path);

// "prefix:ab" picks every header starting with ab; otherwise a comma list of names.
std::vector<std::string> select_columns(const CsvTable& t, const std::string& selector);
// Numeric block; errors name file, line and column.
MatrixXd numeric_columns(const CsvTable& t, const std::vector<std::string>& names);
// Every column parsed as a number (header kept only for diagnostics).
MatrixXd read_matrix_csv(const std::string& path);

// Responses default to every non-predictor column.
Dataset load_dataset(const std::string& path, const std::string& predictors,
                     const std::optional<std::string>& responses = std::nullopt);

// U builders over time points t (length r):
//   identity   I_r
//   poly:d     (1, t, ..., t^d)
//   trig:T     (1, t/T, (t/T)², cos(2πt/T), sin(2πt/T))
//   otherwise  a CSV file holding r rows.
MatrixXd build_U(const std::string& spec, const VectorXd& times);

std::string format_double(double x);  // 17 significant digits

Json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const Json& j);

Json fit_to_json(const EnvelopeFit& fit);
EnvelopeFit fit_from_json(const Json& j);
Json selection_to_json(const DimensionSelection& s);
Json test_to_json(const TestResult& t);
Json contrast_to_json(const ContrastFit& c);
Json profile_to_json(const ProfileEstimate& p, int n);
Json report_to_json(const SimulationReport& r);

// Estimator summaries, one line per estimator.
std::string report_table_csv(const SimulationReport& r);
// Per-entry coefficient table with Wald p-values.
std::string fit_table_csv(const EnvelopeFit& fit, const std::vector<std::string>& responses,
                          const std::vector<std::string>& predictors);
// Plot data with columns series,x,y,lo,hi.
std::string curve_csv(const std::vector<CurvePoint>& points);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace envcore
