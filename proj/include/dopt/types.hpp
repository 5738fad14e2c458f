#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Raised for invalid user-facing configuration (bad stepsize, wrong cost
// family for an algorithm, malformed config file, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numerical routine cannot proceed (singular system,
// unbounded objective, grid too small, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Stacked multi-agent variables are stored as m x d matrices, one row per
// agent. All mixing products (W x) act on rows, which is the Kronecker form
// (W (x) I_d) x without materializing it.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace dopt
