#include "mvcs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "mvcs/numkernel/linalg.hpp"

namespace mvcs {

double clamp_exponent(double p) { return std::clamp(p, kMinExponent, kMaxExponent); }

namespace {

void check_exponent(double p, const char* what) {
  if (!(p > 0.0) || !std::isfinite(p)) {
    throw std::invalid_argument(std::string(what) + ": exponent must be a finite positive number");
  }
}

}  // namespace

double p_norm(const Vector& v, double p) {
  check_exponent(p, "p_norm");
  if (!v.allFinite()) throw std::invalid_argument("p_norm: non-finite entries");
  if (v.size() == 0) return 0.0;
  const double s = v.cwiseAbs().maxCoeff();
  if (s == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v(i)) / s, p);
  return s * std::pow(acc, 1.0 / p);
}

PNormValue p_norm_with_grad(const Vector& v, double p) {
  check_exponent(p, "p_norm");
  if (!v.allFinite()) throw std::invalid_argument("p_norm: non-finite entries");
  PNormValue out;
  out.d_v = Vector::Zero(v.size());
  if (v.size() == 0) return out;
  const double s = v.cwiseAbs().maxCoeff();
  if (s == 0.0) return out;

  double sum = 0.0;
  double sum_log = 0.0;  // sum u^p log u
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double u = std::abs(v(i)) / s;
    if (u == 0.0) continue;
    const double up = std::pow(u, p);
    sum += up;
    sum_log += up * std::log(u);
  }
  out.value = s * std::pow(sum, 1.0 / p);
  const double tail = std::pow(sum, 1.0 / p - 1.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double u = std::abs(v(i)) / s;
    if (u == 0.0) continue;
    out.d_v(i) = (v(i) > 0.0 ? 1.0 : -1.0) * std::pow(u, p - 1.0) * tail;
  }
  out.d_p = out.value * (-std::log(sum) / (p * p) + sum_log / (p * sum));
  return out;
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 8.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series: ln x - 1/2x - sum B_2n / (2n x^2n)
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

double unit_pball_log_volume(double p, int k) {
  check_exponent(p, "unit_pball_log_volume");
  if (k < 1) throw std::invalid_argument("unit_pball_log_volume: dimension must be >= 1");
  const double kd = static_cast<double>(k);
  const double value =
      kd * std::log(2.0) + kd * std::lgamma(1.0 + 1.0 / p) - std::lgamma(1.0 + kd / p);
  if (!std::isfinite(value)) {
    throw std::overflow_error("unit_pball_log_volume: saturated for p = " + std::to_string(p) +
                              ", k = " + std::to_string(k));
  }
  return value;
}

double unit_pball_log_volume_dp(double p, int k) {
  check_exponent(p, "unit_pball_log_volume_dp");
  if (k < 1) throw std::invalid_argument("unit_pball_log_volume_dp: dimension must be >= 1");
  if (k == 1) return 0.0;
  const double kd = static_cast<double>(k);
  return kd / (p * p) * (digamma(1.0 + kd / p) - digamma(1.0 + 1.0 / p));
}

double PNormBall::distance(const Vector& y) const {
  if (y.size() != center.size()) throw std::invalid_argument("PNormBall: dimension mismatch");
  return p_norm(shape * (y - center), p);
}

void PNormBall::validate() const {
  check_exponent(p, "PNormBall");
  if (shape.rows() != center.size() || shape.cols() != center.size()) {
    throw std::invalid_argument("PNormBall: shape/center dimension mismatch");
  }
  if (!(radius >= 0.0)) throw std::invalid_argument("PNormBall: radius must be nonnegative");
}

double ball_log_volume(const PNormBall& ball) {
  ball.validate();
  if (!(ball.radius > 0.0)) return -std::numeric_limits<double>::infinity();
  if (std::isinf(ball.radius)) return std::numeric_limits<double>::infinity();
  const int k = ball.dim();
  // log|det M| so non-symmetric shapes (e.g. rotated diagonals) are handled too.
  double log_abs_det;
  if ((ball.shape - ball.shape.transpose()).cwiseAbs().maxCoeff() == 0.0) {
    log_abs_det = log_det(ball.shape);
  } else {
    const double det = ball.shape.determinant();
    if (det == 0.0) throw SingularMatrixError("ball_log_volume: singular shape matrix");
    log_abs_det = std::log(std::abs(det));
  }
  return unit_pball_log_volume(ball.p, k) - log_abs_det + k * std::log(ball.radius);
}

void MultiNormRegion::validate() const {
  const int k = dim();
  if (k < 1) throw std::invalid_argument("MultiNormRegion: empty center");
  if (rotation.rows() != k || rotation.cols() != k) {
    throw std::invalid_argument("MultiNormRegion: rotation shape mismatch");
  }
  const std::size_t m = std::size_t{1} << k;
  if (scales.size() != m || p.size() != m) {
    throw std::invalid_argument("MultiNormRegion: need exactly 2^k orthant parameters");
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (scales[j].size() != k) throw std::invalid_argument("MultiNormRegion: scale dimension mismatch");
    if ((scales[j].array() < 0.0).any()) {
      throw std::invalid_argument("MultiNormRegion: scales must be nonnegative");
    }
    check_exponent(p[j], "MultiNormRegion");
  }
}

std::size_t orthant_index(const Vector& z) {
  std::size_t j = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z(i) < 0.0) j |= std::size_t{1} << i;
  return j;
}

double multinorm_distance(const Vector& y, const MultiNormRegion& region) {
  if (y.size() != region.center.size()) throw std::invalid_argument("multinorm_distance: dimension mismatch");
  const Vector z = region.rotation * (y - region.center);
  const std::size_t j = orthant_index(z);
  if (j >= region.scales.size()) throw std::invalid_argument("multinorm_distance: missing orthant");
  return p_norm(region.scales[j].cwiseProduct(z), region.p[j]);
}

double multinorm_log_volume(const MultiNormRegion& region) {
  region.validate();
  const int k = region.dim();
  std::vector<double> terms;
  terms.reserve(region.orthant_count());
  for (std::size_t j = 0; j < region.orthant_count(); ++j) {
    if ((region.scales[j].array() <= 0.0).any()) {
      throw SingularMatrixError("multinorm_log_volume: singular orthant scaling");
    }
    terms.push_back(unit_pball_log_volume(region.p[j], k) - region.scales[j].array().log().sum());
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

McEstimate mc_volume_estimate(const std::function<bool(const Vector&)>& inside, const Vector& lower,
                              const Vector& upper, long samples, std::uint64_t seed) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("mc_volume_estimate: box bounds dimension mismatch");
  }
  if (((upper - lower).array() <= 0.0).any()) {
    throw std::invalid_argument("mc_volume_estimate: degenerate box");
  }
  if (samples < 1000) throw std::invalid_argument("mc_volume_estimate: need at least 1000 samples");
  const double box = (upper - lower).prod();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector y(lower.size());
  long hits = 0;
  for (long s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = lower(i) + (upper(i) - lower(i)) * unit(rng);
    if (inside(y)) ++hits;
  }
  const double f = static_cast<double>(hits) / static_cast<double>(samples);
  return {box * f, box * std::sqrt(f * (1.0 - f) / static_cast<double>(samples))};
}

double log_sum_exp(const std::vector<double>& x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace mvcs
