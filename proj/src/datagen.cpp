#include "mvcs/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mvcs/numkernel/linalg.hpp"

namespace mvcs {

void Dataset::validate() const {
  if (x.rows() != y.rows()) throw std::invalid_argument("Dataset: covariate and response row counts differ");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("Dataset: non-finite entries");
}

Dataset Dataset::rows(const std::vector<std::size_t>& idx) const {
  Dataset out{Matrix(static_cast<Eigen::Index>(idx.size()), x.cols()),
              Matrix(static_cast<Eigen::Index>(idx.size()), y.cols())};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(idx[i]);
    if (src >= x.rows()) throw std::out_of_range("Dataset::rows: index out of range");
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(src);
    out.y.row(static_cast<Eigen::Index>(i)) = y.row(src);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multivariate generator
// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  if (d < 1 || k < 1) throw std::invalid_argument("SyntheticConfig: dimensions must be positive");
  if (anchors < 1) throw std::invalid_argument("SyntheticConfig: need at least one anchor");
  if (has_parameters()) {
    if (rotations.size() != static_cast<std::size_t>(anchors) ||
        anchor_points.size() != static_cast<std::size_t>(anchors)) {
      throw std::invalid_argument("SyntheticConfig: parameter count does not match anchors");
    }
    if (v.size() != d || beta.rows() != d || beta.cols() != k || j2.rows() != d || j2.cols() != k) {
      throw std::invalid_argument("SyntheticConfig: parameter shapes do not match (d, k)");
    }
  }
}

void SyntheticConfig::draw_parameters() {
  std::mt19937_64 rng(seed ^ 0xa11c0ffeeULL);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  anchor_points.clear();
  rotations.clear();
  for (int j = 0; j < anchors; ++j) {
    Vector a(d);
    for (int i = 0; i < d; ++i) a(i) = normal(rng);
    anchor_points.push_back(a);
    // Redraw until the rotation has a principal logarithm (all angles < pi).
    for (;;) {
      Matrix g(k, k);
      for (int c = 0; c < k; ++c)
        for (int r = 0; r < k; ++r) g(r, c) = normal(rng);
      try {
        Matrix rot = qr_rotation(g);
        logm_rotation(rot);
        rotations.push_back(std::move(rot));
        break;
      } catch (const std::exception&) {
      }
    }
  }
  v.resize(d);
  for (int i = 0; i < d; ++i) v(i) = unif(rng);
  beta.resize(d, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < d; ++r) beta(r, c) = unif(rng);
  j2 = Matrix::Zero(d, k);
  for (int i = 0; i < std::min({2, d, k}); ++i) j2(i, i) = 1.0;
}

Vector synthetic_mean(const SyntheticConfig& c, const Vector& x) {
  const Vector lin = c.beta.transpose() * x;
  const Vector quad = c.beta.transpose() * x.cwiseProduct(x);
  return 2.0 * (lin.array().sin() + quad.array().tanh() + (c.j2.transpose() * x).array()).matrix();
}

double synthetic_radius(const SyntheticConfig& c, const Vector& x) { return x.norm() / 2.0 + x.dot(c.v) + 0.15; }

Matrix synthetic_rotation(const SyntheticConfig& c, const Vector& x) {
  if (c.rotations.size() == 1) return c.rotations.front();
  std::vector<double> w(c.rotations.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double dist = (x - c.anchor_points[j]).norm() + 1e-12;
    w[j] = 1.0 / std::pow(dist, 4);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  Matrix acc = Matrix::Zero(c.k, c.k);
  for (std::size_t j = 0; j < w.size(); ++j) acc += (w[j] / total) * logm_rotation(c.rotations[j]);
  return expm(acc);
}

Matrix synthetic_transform(const SyntheticConfig& c, const Vector& x) {
  if (c.transform_fixed) return c.fixed_radius * c.rotations.front();
  return synthetic_radius(c, x) * synthetic_rotation(c, x);
}

Dataset gen_multivariate(SyntheticConfig& config) {
  config.validate();
  if (!config.has_parameters()) config.draw_parameters();
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo(1.0);
  const auto n = static_cast<Eigen::Index>(config.n);
  Dataset out{Matrix(n, config.d), Matrix(n, config.k)};
  // Precomputed logarithms keep the per-sample cost to one expm.
  std::vector<Matrix> logs;
  for (const Matrix& r : config.rotations) logs.push_back(logm_rotation(r));
  Vector x(config.d), b(config.k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < config.d; ++j) x(j) = normal(rng);
    for (int j = 0; j < config.k; ++j) b(j) = config.noise == NoiseKind::gaussian ? normal(rng) : expo(rng);
    Matrix t;
    if (config.transform_fixed) {
      t = config.fixed_radius * config.rotations.front();
    } else if (logs.size() == 1) {
      t = synthetic_radius(config, x) * config.rotations.front();
    } else {
      std::vector<double> w(logs.size());
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = 1.0 / std::pow((x - config.anchor_points[j]).norm() + 1e-12, 4);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      Matrix acc = Matrix::Zero(config.k, config.k);
      for (std::size_t j = 0; j < w.size(); ++j) acc += (w[j] / total) * logs[j];
      t = synthetic_radius(config, x) * expm(acc);
    }
    out.x.row(i) = x.transpose();
    out.y.row(i) = (synthetic_mean(config, x) + t * b).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-dimensional generator
// ---------------------------------------------------------------------------

double contamination_fraction(double alpha) { return 0.75 * alpha; }

double gen_1d_mean(double x) { return 0.5 * std::sin(2.0 * std::numbers::pi * x); }

double gen_1d_scale(double x) { return 0.5 + 2.0 * x; }

OneDimData gen_1d(double outlier_fraction, std::size_t n, std::uint64_t seed) {
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw std::invalid_argument("gen_1d: outlier fraction must be in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  OneDimData out;
  const auto rows = static_cast<Eigen::Index>(n);
  out.data.x.resize(rows, 1);
  out.data.y.resize(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double x = unif(rng);
    out.data.x(i, 0) = x;
    out.data.y(i, 0) = gen_1d_mean(x) + gen_1d_scale(x) * expo(rng);
  }
  const auto m = static_cast<std::size_t>(std::llround(outlier_fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) out.data.y(static_cast<Eigen::Index>(i), 0) = kOutlierValue;
  out.outliers = std::move(idx);
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<std::string> csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv_header: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv_header: empty file " + path);
  return split_line(line);
}

Dataset load_csv(const std::string& path, const std::vector<std::string>& x_columns,
                 const std::vector<std::string>& y_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  const auto header = split_line(line);
  auto locate = [&](const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    for (const auto& name : names) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw std::runtime_error("load_csv: missing column '" + name + "' in " + path);
      idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    return idx;
  };
  if (x_columns.empty() || y_columns.empty()) throw std::invalid_argument("load_csv: need covariate and response columns");
  const auto xi = locate(x_columns);
  const auto yi = locate(y_columns);

  std::vector<std::vector<double>> xs, ys;
  std::vector<std::string> bad;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    auto parse = [&](std::size_t col, double& v) {
      if (col >= cells.size()) return false;
      const std::string& s = cells[col];
      char* end = nullptr;
      v = std::strtod(s.c_str(), &end);
      return !s.empty() && end == s.c_str() + s.size() && std::isfinite(v);
    };
    std::vector<double> xr(xi.size()), yr(yi.size());
    bool ok = true;
    for (std::size_t j = 0; j < xi.size() && ok; ++j) ok = parse(xi[j], xr[j]);
    for (std::size_t j = 0; j < yi.size() && ok; ++j) ok = parse(yi[j], yr[j]);
    if (!ok) {
      bad.push_back(std::to_string(row));
      continue;
    }
    xs.push_back(std::move(xr));
    ys.push_back(std::move(yr));
  }
  if (!bad.empty()) {
    std::string msg = "load_csv: non-numeric or non-finite cells in data rows";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i) msg += " " + bad[i];
    if (bad.size() > 20) msg += " ...";
    throw std::runtime_error(msg);
  }
  if (xs.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
  Dataset out{Matrix(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xi.size())),
              Matrix(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(yi.size()))};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < xi.size(); ++j) out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    for (std::size_t j = 0; j < yi.size(); ++j) out.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ys[i][j];
  }
  return out;
}

void write_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int j = 0; j < data.x_dim(); ++j) out << (j ? "," : "") << "x" << j;
  for (int j = 0; j < data.y_dim(); ++j) out << ",y" << j;
  out << "\n";
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << (j ? "," : "") << data.x(i, j);
    for (Eigen::Index j = 0; j < data.y.cols(); ++j) out << "," << data.y(i, j);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Quantile transform
// ---------------------------------------------------------------------------

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("normal_quantile: argument must be in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (u < low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - low) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the exact CDF.
  const double e = normal_cdf(x) - u;
  const double t = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - t / (1.0 + 0.5 * x * t);
}

QuantileTransform QuantileTransform::fit(const std::vector<double>& column) {
  QuantileTransform qt;
  std::vector<double> s = column;
  for (double v : s)
    if (!std::isfinite(v)) throw std::invalid_argument("QuantileTransform: non-finite training value");
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    // Tied values share the average of their plotting positions (i + 1/2) / n.
    const double level = (0.5 * static_cast<double>(i + j - 1) + 0.5) / n;
    qt.knots.push_back(s[i]);
    qt.levels.push_back(level);
    i = j;
  }
  if (qt.knots.size() < 2) {
    std::cerr << "warning: QuantileTransform: constant column, using the identity\n";
    qt.knots.clear();
    qt.levels.clear();
    qt.identity = true;
  }
  return qt;
}

double QuantileTransform::apply(double value) const {
  if (identity) return value;
  double level;
  if (value <= knots.front()) {
    level = levels.front();
  } else if (value >= knots.back()) {
    level = levels.back();
  } else {
    const auto it = std::upper_bound(knots.begin(), knots.end(), value);
    const auto j = static_cast<std::size_t>(it - knots.begin());
    const double t = (value - knots[j - 1]) / (knots[j] - knots[j - 1]);
    level = levels[j - 1] + t * (levels[j] - levels[j - 1]);
  }
  return normal_quantile(level);
}

double QuantileTransform::inverse(double z) const {
  if (identity) return z;
  const double u = std::clamp(normal_cdf(z), levels.front(), levels.back());
  if (u <= levels.front()) return knots.front();
  if (u >= levels.back()) return knots.back();
  const auto it = std::upper_bound(levels.begin(), levels.end(), u);
  const auto j = static_cast<std::size_t>(it - levels.begin());
  const double t = (u - levels[j - 1]) / (levels[j] - levels[j - 1]);
  return knots[j - 1] + t * (knots[j] - knots[j - 1]);
}

DatasetTransform DatasetTransform::fit(const Dataset& train) {
  train.validate();
  DatasetTransform tr;
  auto column = [](const Matrix& m, Eigen::Index j) {
    return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
  };
  for (Eigen::Index j = 0; j < train.x.cols(); ++j) tr.x.push_back(QuantileTransform::fit(column(train.x, j)));
  for (Eigen::Index j = 0; j < train.y.cols(); ++j) tr.y.push_back(QuantileTransform::fit(column(train.y, j)));
  return tr;
}

Dataset DatasetTransform::apply(const Dataset& data) const {
  if (empty()) return data;
  if (static_cast<std::size_t>(data.x_dim()) != x.size() || static_cast<std::size_t>(data.y_dim()) != y.size()) {
    throw std::invalid_argument("DatasetTransform: column count mismatch");
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < out.x.cols(); ++j)
    for (Eigen::Index i = 0; i < out.x.rows(); ++i) out.x(i, j) = x[static_cast<std::size_t>(j)].apply(data.x(i, j));
  for (Eigen::Index j = 0; j < out.y.cols(); ++j)
    for (Eigen::Index i = 0; i < out.y.rows(); ++i) out.y(i, j) = y[static_cast<std::size_t>(j)].apply(data.y(i, j));
  return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  for (double f : {train, val, calib, test})
    if (!(f > 0.0)) throw std::invalid_argument("SplitSpec: every fraction must be positive");
  if (std::abs(train + val + calib + test - 1.0) > 1e-9) throw std::invalid_argument("SplitSpec: fractions must sum to 1");
}

Splits split(const Dataset& data, const SplitSpec& spec) {
  spec.validate();
  data.validate();
  const std::size_t n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const double nd = static_cast<double>(n);
  const std::size_t cuts[] = {0, static_cast<std::size_t>(std::llround(spec.train * nd)),
                              static_cast<std::size_t>(std::llround((spec.train + spec.val) * nd)),
                              static_cast<std::size_t>(std::llround((spec.train + spec.val + spec.calib) * nd)), n};
  Dataset parts[4];
  for (int p = 0; p < 4; ++p) {
    if (cuts[p + 1] <= cuts[p]) throw std::invalid_argument("split: a partition received no rows");
    parts[p] = data.rows(std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(cuts[p]),
                                                  perm.begin() + static_cast<std::ptrdiff_t>(cuts[p + 1])));
  }
  return {parts[0], parts[1], parts[2], parts[3]};
}

}  // namespace mvcs
