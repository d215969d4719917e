#pragma once

#include <cstddef>
#include <vector>

namespace mvcs {

/// r-th largest value and the index attaining it. Ties go to the smallest index.
struct RankedValue {
  double value = 0.0;
  std::size_t index = 0;
};
RankedValue kth_largest(const std::vector<double>& values, std::size_t r);

/// Indices of the r largest values, in descending order (same tie rule).
std::vector<std::size_t> top_r_indices(const std::vector<double>& values, std::size_t r);

/// Average of the r largest values.
double mean_top_r(const std::vector<double>& values, std::size_t r);

/// min over nu of (1/r) sum max(v_i - nu, 0) + nu, scanned over the breakpoints nu = v_i.
struct TopRMinimum {
  double value = 0.0;
  double minimizer = 0.0;
};
TopRMinimum topr_via_minimization(const std::vector<double>& values, std::size_t r);

/// ceil((1 - alpha)(n + 1))-th smallest score, or +inf when that rank exceeds n.
double conformal_quantile(const std::vector<double>& scores, double alpha);

/// The rank used by conformal_quantile (1-based); may exceed n.
std::size_t conformal_rank(std::size_t n, double alpha);

}  // namespace mvcs
