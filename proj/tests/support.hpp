#pragma once

// Helpers shared by the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <random>

#include "mvcs/types.hpp"

namespace mvcs::testing {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector gaussian_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  return gaussian_matrix(n, 1, rng, sd).col(0);
}

/// Central difference of f at x along coordinate (i, j) of a matrix parameter.
inline double central_difference(const std::function<double(const Matrix&)>& f, Matrix x, Eigen::Index i,
                                 Eigen::Index j, double h) {
  const double x0 = x(i, j);
  x(i, j) = x0 + h;
  const double up = f(x);
  x(i, j) = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor for
/// near-zero derivatives.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace mvcs::testing
