#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace envcore {

enum class ErrorCode {
  NonPositiveDefinite,
  NoConvergence,
  DimensionMismatch,
  RankDeficientU,
  SingularMoment,
  SingularDesign,
  Unidentifiable,
  InvalidPartition,
  RankDeficientContrast,
  DegenerateVariance,
  InvalidSpec,
  InvalidData,
  ParseError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Thrown by the Stiefel minimizer; keeps the best iterate seen.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& message, Eigen::MatrixXd best, double best_objective);
  const Eigen::MatrixXd& best_iterate() const noexcept { return best_; }
  double best_objective() const noexcept { return best_objective_; }

 private:
  Eigen::MatrixXd best_;
  double best_objective_;
};

}  // namespace envcore
