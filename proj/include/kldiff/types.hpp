#pragma once

#include <stdexcept>

#include <Eigen/Core>

namespace kldiff {

/// K x 3 array, one row per atom. Used for fractional coordinates,
/// Lie-algebra velocities and torus displacements.
using AtomArray = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Thrown when a combination of configuration options is not supported.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kldiff
