#pragma once

#include <cstddef>
#include <vector>

#include "mvcs/dataset.hpp"
#include "mvcs/geometry.hpp"
#include "mvcs/predictor.hpp"
#include "mvcs/regression.hpp"

// Split-conformal calibration and evaluation, generic over SetPredictor.

namespace mvcs {

/// Sets q_hat to the ceil((1 - alpha)(n + 1))-th smallest calibration score
/// (+inf, with a warning, when that rank exceeds n).
void calibrate(SetPredictor& predictor, const Dataset& calibration, double alpha);

/// {y : ||Lambda(x)(y - f(x))||_p <= q_hat}. Throws std::logic_error before calibration.
PNormBall predict_set(const AdaptivePredictor& predictor, const Vector& x);

struct EvalReport {
  double coverage = 0.0;
  double mean_normalized_volume = 0.0;
  std::vector<double> per_point_volumes;  // vol^(1/k) per test point
  std::size_t n_test = 0;
  std::size_t covered = 0;
};

/// Coverage of the calibrated sets and their mean normalized volume.
EvalReport evaluate(const SetPredictor& predictor, const Dataset& test);

struct BinnedCoverage {
  std::vector<double> coverage;
  std::vector<std::size_t> counts;
  std::vector<double> lower_edges;  // smallest feature value in each bin
  std::vector<bool> flagged;        // bins with fewer than 10 points
};

/// Coverage within equal-count bins of one covariate.
BinnedCoverage binned_conditional_coverage(const SetPredictor& predictor, const Dataset& test, int n_bins,
                                           int feature = 0);

}  // namespace mvcs
