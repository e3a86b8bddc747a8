#pragma once

#include <stdexcept>
#include <string>

namespace plap {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
  config,    // invalid parameters or malformed configuration
  data,      // unreadable or inconsistent input data
  solver,    // numerical failure inside a solver
  internal,  // violated internal invariant
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return {ErrorKind::config, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::data, what}; }
inline Error solver_error(const std::string& what) { return {ErrorKind::solver, what}; }
inline Error internal_error(const std::string& what) { return {ErrorKind::internal, what}; }

}  // namespace plap
