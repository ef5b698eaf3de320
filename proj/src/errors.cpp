#include "envcore/errors.hpp"

#include <utility>

namespace envcore {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDefinite: return "NonPositiveDefinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficientU: return "RankDeficientU";
    case ErrorCode::SingularMoment: return "SingularMoment";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::Unidentifiable: return "Unidentifiable";
    case ErrorCode::InvalidPartition: return "InvalidPartition";
    case ErrorCode::RankDeficientContrast: return "RankDeficientContrast";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

NoConvergenceError::NoConvergenceError(const std::string& message, Eigen::MatrixXd best,
                                       double best_objective)
    : Error(ErrorCode::NoConvergence, message),
      best_(std::move(best)),
      best_objective_(best_objective) {}

}  // namespace envcore
