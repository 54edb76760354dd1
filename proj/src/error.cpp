#include "swingcert/error.hpp"

#include <utility>

namespace swingcert {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Disconnected: return "disconnected";
    case ErrorKind::Singular: return "singular";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::NonConvergence: return "non_convergence";
    case ErrorKind::StaticLimit: return "static_limit";
    case ErrorKind::NoEquilibrium: return "no_equilibrium";
    case ErrorKind::FrameMismatch: return "frame_mismatch";
    case ErrorKind::Consistency: return "consistency";
    case ErrorKind::InvalidBracket: return "invalid_bracket";
    case ErrorKind::Io: return "io";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

NonConvergenceError::NonConvergenceError(const std::string& message,
                                         Eigen::VectorXd last_iterate)
    : Error(ErrorKind::NonConvergence, message),
      last_iterate_(std::move(last_iterate)) {}

}  // namespace swingcert
