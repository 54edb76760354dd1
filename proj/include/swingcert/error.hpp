#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace swingcert {

enum class ErrorKind {
  Validation,
  Schema,
  Disconnected,
  Singular,
  Dimension,
  NonConvergence,
  StaticLimit,
  NoEquilibrium,
  FrameMismatch,
  Consistency,
  InvalidBracket,
  Io,
  Usage,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can print a
// machine-parsable prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& message, Eigen::VectorXd last_iterate);
  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

}  // namespace swingcert
