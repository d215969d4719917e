#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvcs/types.hpp"

namespace mvcs {

/// A fitted set-valued predictor whose sets are sublevel sets of a
/// nonconformity score: C(x) = {y : score(x, y) <= q}.
class SetPredictor {
 public:
  virtual ~SetPredictor() = default;

  virtual std::string method() const = 0;
  virtual int response_dim() const = 0;

  /// Scores for each row pair (x_i, y_i).
  virtual std::vector<double> scores(const Matrix& x, const Matrix& y) const = 0;

  /// log Lebesgue volume of {y : score(x_i, y) <= q} for each row x_i.
  virtual std::vector<double> log_volumes(const Matrix& x, double q) const = 0;

  double score(const Vector& x, const Vector& y) const;
  double log_volume(const Vector& x, double q) const;

  /// Threshold set by calibration; unset before.
  std::optional<double> q_hat;
};

}  // namespace mvcs
