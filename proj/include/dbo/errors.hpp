#pragma once

#include <stdexcept>
#include <string>

namespace dbo {

// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Iterates left the sane region, usually step sizes too large (CLI exit code 3).
struct DivergenceError : std::runtime_error {
  DivergenceError(long round_, const std::string& what)
      : std::runtime_error("round " + std::to_string(round_) + ": " + what), round(round_) {}
  long round;
};

// An oracle failed its own contract, e.g. a Hessian solve on a matrix that is
// not positive definite, or an inner solve that did not converge (exit code 4).
struct OracleError : std::runtime_error {
  explicit OracleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dbo
