#pragma once

#include <vector>

#include "mvcs/dataset.hpp"
#include "mvcs/numkernel/mlp.hpp"
#include "mvcs/predictor.hpp"
#include "mvcs/regression.hpp"

// Comparison methods: per-axis quantile regression, and ellipsoids from the
// global or k-nearest-neighbour covariance of the residuals.

namespace mvcs {

/// Per-axis miscoverage 2 (1 - (1 - alpha)^(1/k)), so that k independent
/// two-sided intervals jointly cover 1 - alpha.
double tilde_alpha(double alpha, int k);

/// tau (y - pred)^+ + (1 - tau) (pred - y)^+
double pinball_loss(double pred, double y, double tau);

struct PinballLoss {
  double value = 0.0;  // batch mean of the axis-summed pinball loss
  MlpGrads grads;
};
PinballLoss pinball_batch_loss(const Mlp& net, const Matrix& x, const Matrix& y, double tau,
                               bool with_grads = true);

/// Box {y : lower(x) - q <= y <= upper(x) + q} from two quantile networks.
class QuantileNets final : public SetPredictor {
 public:
  Mlp lower;
  Mlp upper;
  double tilde_alpha = 0.0;

  std::string method() const override { return "naive_qr"; }
  int response_dim() const override { return lower.output_width(); }
  /// max_i max(lower_i - y_i, y_i - upper_i)
  std::vector<double> scores(const Matrix& x, const Matrix& y) const override;
  /// log prod_i max(0, upper_i - lower_i + 2q)
  std::vector<double> log_volumes(const Matrix& x, double q) const override;
};

/// Quantile nets at levels tilde_alpha(alpha, k)/2 and 1 - tilde_alpha(alpha, k)/2.
QuantileNets fit_naive_qr(const Dataset& train, const Dataset& val, double alpha, const TrainConfig& cfg);
/// Same, with the two-sided per-axis miscoverage `level` given directly
/// (levels level/2 and 1 - level/2).
QuantileNets fit_quantile_nets(const Dataset& train, const Dataset& val, double level, const TrainConfig& cfg);
double naive_qr_score(const QuantileNets& nets, const Vector& x, const Vector& y);
double naive_qr_volume(const QuantileNets& nets, const Vector& x, double q_hat);

/// Ellipsoid {y : ||Sigma^{-1/2}(y - f(x))||_2 <= q} with one residual covariance.
class CovBaseline final : public SetPredictor {
 public:
  CenterModel center;
  Matrix sigma;
  Matrix sigma_half_inv;

  std::string method() const override { return "emp_cov"; }
  int response_dim() const override { return center.net.output_width(); }
  std::vector<double> scores(const Matrix& x, const Matrix& y) const override;
  std::vector<double> log_volumes(const Matrix& x, double q) const override;
};

CovBaseline fit_empirical_cov(const Dataset& train, const CenterModel& center);

/// Residual covariance with the 1e-8 * trace/k ridge used by both covariance baselines.
Matrix ridged_covariance(const Matrix& residuals);

/// Like CovBaseline, but Sigma is estimated from the residuals of the m
/// training points nearest to x (Euclidean distance in covariate space).
class LocalCovBaseline final : public SetPredictor {
 public:
  CenterModel center;
  Matrix train_x;
  Matrix train_residuals;
  int m_neighbors = 1000;

  std::string method() const override { return "local_cov"; }
  int response_dim() const override { return center.net.output_width(); }
  std::vector<double> scores(const Matrix& x, const Matrix& y) const override;
  std::vector<double> log_volumes(const Matrix& x, double q) const override;

  std::vector<std::size_t> neighbors(const Vector& x) const;
  Matrix local_sigma(const Vector& x) const;
};

/// m is clamped to the training size (with a warning).
LocalCovBaseline fit_local_cov(const Dataset& train, const CenterModel& center, int m_neighbors);

}  // namespace mvcs
