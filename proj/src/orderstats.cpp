#include "mvcs/orderstats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mvcs {

namespace {

void check_rank(std::size_t n, std::size_t r, const char* what) {
  if (r < 1 || r > n) {
    throw std::out_of_range(std::string(what) + ": rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(n) + "]");
  }
}

void check_finite(const std::vector<double>& values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

// Descending by value, ascending by index on ties.
auto descending(const std::vector<double>& values) {
  return [&values](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
}

}  // namespace

std::vector<std::size_t> top_r_indices(const std::vector<double>& values, std::size_t r) {
  check_rank(values.size(), r, "top_r_indices");
  check_finite(values, "top_r_indices");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(r), idx.end(),
                    descending(values));
  idx.resize(r);
  return idx;
}

RankedValue kth_largest(const std::vector<double>& values, std::size_t r) {
  check_rank(values.size(), r, "kth_largest");
  check_finite(values, "kth_largest");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto nth = idx.begin() + static_cast<std::ptrdiff_t>(r - 1);
  std::nth_element(idx.begin(), nth, idx.end(), descending(values));
  const double value = values[*nth];
  const auto first = std::find(values.begin(), values.end(), value);
  return {value, static_cast<std::size_t>(first - values.begin())};
}

double mean_top_r(const std::vector<double>& values, std::size_t r) {
  const auto idx = top_r_indices(values, r);
  double acc = 0.0;
  for (std::size_t i : idx) acc += values[i];
  return acc / static_cast<double>(r);
}

TopRMinimum topr_via_minimization(const std::vector<double>& values, std::size_t r) {
  check_rank(values.size(), r, "topr_via_minimization");
  check_finite(values, "topr_via_minimization");
  const double inv_r = 1.0 / static_cast<double>(r);
  TopRMinimum best{std::numeric_limits<double>::infinity(), 0.0};
  // The objective is piecewise linear in nu with kinks at the values, so a
  // minimizer sits on one of them.
  for (double nu : values) {
    double acc = 0.0;
    for (double v : values) acc += std::max(v - nu, 0.0);
    const double obj = inv_r * acc + nu;
    if (obj < best.value) best = {obj, nu};
  }
  return best;
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("conformal_rank: alpha must be in (0, 1)");
  // Guard against 0.9 * 10 = 9.000000000000002 style rounding before the ceiling.
  const double raw = (1.0 - alpha) * static_cast<double>(n + 1);
  const double rounded = std::round(raw);
  const double level = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
  return static_cast<std::size_t>(level);
}

double conformal_quantile(const std::vector<double>& scores, double alpha) {
  if (scores.empty()) throw std::invalid_argument("conformal_quantile: empty scores");
  const std::size_t rank = conformal_rank(scores.size(), alpha);
  if (rank > scores.size()) {
    std::cerr << "warning: conformal rank " << rank << " exceeds calibration size " << scores.size()
              << "; returning an unbounded threshold\n";
    return std::numeric_limits<double>::infinity();
  }
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("conformal_quantile: NaN score");
  std::vector<double> sorted = scores;
  const auto nth = sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(sorted.begin(), nth, sorted.end());
  return *nth;
}

}  // namespace mvcs
