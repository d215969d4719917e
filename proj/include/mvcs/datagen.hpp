#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvcs/dataset.hpp"
#include "mvcs/types.hpp"

namespace mvcs {

enum class NoiseKind { gaussian, exponential };

/// Y = f(X) + t(X) B with X ~ N(0, I_d),
///   t(X) = r(X) expm( sum_j w_j(X) logm(R_j) ),  w_j ~ 1/|X - X_j|^4,
///   r(X) = |X|/2 + X^T v + 0.15,
///   f(X) = 2 (sin(X^T beta) + tanh((X .* X)^T beta) + X^T J2).
/// In fixed mode t(X) is the constant fixed_radius * R_1.
struct SyntheticConfig {
  int d = 4;
  int k = 4;
  std::size_t n = 30000;
  int anchors = 4;
  NoiseKind noise = NoiseKind::exponential;
  bool transform_fixed = true;
  double fixed_radius = 0.65;
  std::uint64_t seed = 0;

  // Drawn from the seed by draw_parameters(); kept so a dataset can be reproduced.
  std::vector<Vector> anchor_points;
  std::vector<Matrix> rotations;
  Vector v;
  Matrix beta;  // d x k
  Matrix j2;    // d x k, ones at (0,0) and (1,1)

  bool has_parameters() const { return !rotations.empty(); }
  void draw_parameters();
  void validate() const;
};

/// Draws parameters first if the config has none.
Dataset gen_multivariate(SyntheticConfig& config);

Vector synthetic_mean(const SyntheticConfig& config, const Vector& x);
double synthetic_radius(const SyntheticConfig& config, const Vector& x);
/// Interpolated rotation expm(sum_j w_j(X) logm(R_j)).
Matrix synthetic_rotation(const SyntheticConfig& config, const Vector& x);
/// t(X), honouring fixed mode.
Matrix synthetic_transform(const SyntheticConfig& config, const Vector& x);

/// Fraction of contaminated responses used for a target miscoverage: 3 alpha / 4.
double contamination_fraction(double alpha);

/// X ~ U(0, 1), Y = 0.5 sin(2 pi X) + (0.5 + 2X) B with B ~ Exp(1); a uniformly
/// chosen round(outlier_fraction * n) responses are replaced by 10.
struct OneDimData {
  Dataset data;
  std::vector<std::size_t> outliers;  // rows set to the outlier value
};
inline constexpr double kOutlierValue = 10.0;
OneDimData gen_1d(double outlier_fraction, std::size_t n, std::uint64_t seed);
double gen_1d_mean(double x);
double gen_1d_scale(double x);

/// Comma-separated file with a header row; columns selected by name.
Dataset load_csv(const std::string& path, const std::vector<std::string>& x_columns,
                 const std::vector<std::string>& y_columns);
void write_csv(const Dataset& data, const std::string& path);
std::vector<std::string> csv_header(const std::string& path);

/// Monotone map to N(0, 1) through the empirical CDF of a training column.
struct QuantileTransform {
  std::vector<double> knots;   // sorted distinct training values
  std::vector<double> levels;  // CDF level at each knot, within [1/(2n), 1 - 1/(2n)]
  bool identity = false;

  static QuantileTransform fit(const std::vector<double>& column);
  double apply(double value) const;
  double inverse(double z) const;
};

double normal_cdf(double z);
/// Inverse standard normal CDF (rational approximation refined by one Halley step).
double normal_quantile(double u);

/// One transform per covariate and response column.
struct DatasetTransform {
  std::vector<QuantileTransform> x;
  std::vector<QuantileTransform> y;

  static DatasetTransform fit(const Dataset& train);
  Dataset apply(const Dataset& data) const;
  bool empty() const { return x.empty() && y.empty(); }
};

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double calib = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Splits {
  Dataset train, val, calib, test;
};

/// Seeded shuffle, then contiguous slices at the rounded cumulative fractions.
Splits split(const Dataset& data, const SplitSpec& spec);

}  // namespace mvcs
