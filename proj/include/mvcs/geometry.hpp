#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mvcs/types.hpp"

namespace mvcs {

/// Range every solver clamps the learned exponent into.
inline constexpr double kMinExponent = 0.05;
inline constexpr double kMaxExponent = 50.0;

double clamp_exponent(double p);

/// Overflow-safe ||v||_p = s * (sum (|v_i|/s)^p)^(1/p), s = max |v_i|.
/// Valid for every p > 0 (a quasi-norm below 1).
double p_norm(const Vector& v, double p);

/// p-norm together with its partial derivatives. The gradient is taken as zero
/// on zero coordinates and for the zero vector.
struct PNormValue {
  double value = 0.0;
  Vector d_v;         // d||v||_p / dv
  double d_p = 0.0;   // d||v||_p / dp
};
PNormValue p_norm_with_grad(const Vector& v, double p);

/// Digamma function via upward recurrence and the asymptotic series.
double digamma(double x);

/// log of the Lebesgue measure of the unit p-ball in R^k:
/// k log 2 + k logGamma(1 + 1/p) - logGamma(1 + k/p).
double unit_pball_log_volume(double p, int k);

/// d/dp of unit_pball_log_volume: (k/p^2) (psi(1 + k/p) - psi(1 + 1/p)).
double unit_pball_log_volume_dp(double p, int k);

/// {y : ||M (y - mu)||_p <= radius}
struct PNormBall {
  double p = 2.0;
  Matrix shape;  // M
  Vector center;  // mu
  double radius = 1.0;

  int dim() const { return static_cast<int>(center.size()); }
  double distance(const Vector& y) const;  // ||M (y - mu)||_p
  bool contains(const Vector& y) const { return distance(y) <= radius; }
  void validate() const;
};

/// unit_pball_log_volume(p, k) - log det M + k log radius.
double ball_log_volume(const PNormBall& ball);

/// Piecewise p-norm region with one (scaling, exponent) pair per orthant of the
/// rotated frame z = R (y - mu).
struct MultiNormRegion {
  Matrix rotation;             // R in SO(k)
  std::vector<Vector> scales;  // diagonal of D_j, one per orthant
  std::vector<double> p;       // p_j
  Vector center;               // mu

  int dim() const { return static_cast<int>(center.size()); }
  std::size_t orthant_count() const { return scales.size(); }
  void validate() const;
};

/// j = sum_i bit_i 2^i with bit_i = 1 iff z_i < 0.
std::size_t orthant_index(const Vector& z);

/// ||D_j R (y - mu)||_{p_j} where j is the orthant of R (y - mu).
double multinorm_distance(const Vector& y, const MultiNormRegion& region);

/// log( (1/m) sum_j unit_pball_volume(p_j) / det D_j ), via log-sum-exp.
double multinorm_log_volume(const MultiNormRegion& region);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Hit-or-miss Monte Carlo volume of {y in box : inside(y)}.
McEstimate mc_volume_estimate(const std::function<bool(const Vector&)>& inside, const Vector& lower,
                              const Vector& upper, long samples, std::uint64_t seed);

/// log( sum_i exp(x_i) ) without overflow.
double log_sum_exp(const std::vector<double>& x);

}  // namespace mvcs
