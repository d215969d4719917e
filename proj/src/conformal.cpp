#include "mvcs/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mvcs/orderstats.hpp"

namespace mvcs {

double SetPredictor::score(const Vector& x, const Vector& y) const {
  return scores(Matrix(x.transpose()), Matrix(y.transpose())).front();
}

double SetPredictor::log_volume(const Vector& x, double q) const {
  return log_volumes(Matrix(x.transpose()), q).front();
}

void calibrate(SetPredictor& predictor, const Dataset& calibration, double alpha) {
  if (calibration.empty()) throw std::invalid_argument("calibrate: empty calibration set");
  predictor.q_hat = conformal_quantile(predictor.scores(calibration.x, calibration.y), alpha);
}

PNormBall predict_set(const AdaptivePredictor& predictor, const Vector& x) {
  if (!predictor.q_hat) throw std::logic_error("predict_set: predictor is not calibrated");
  PNormBall ball;
  ball.p = predictor.p();
  ball.shape = predictor.lambda(x);
  ball.center = predictor.center.predict(x);
  ball.radius = *predictor.q_hat;
  return ball;
}

EvalReport evaluate(const SetPredictor& predictor, const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (!predictor.q_hat) throw std::logic_error("evaluate: predictor is not calibrated");
  const double q = *predictor.q_hat;
  const auto s = predictor.scores(test.x, test.y);
  const auto lv = predictor.log_volumes(test.x, q);
  const double k = static_cast<double>(predictor.response_dim());
  EvalReport rep;
  rep.n_test = s.size();
  rep.covered = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [q](double v) { return v <= q; }));
  rep.coverage = static_cast<double>(rep.covered) / static_cast<double>(rep.n_test);
  rep.per_point_volumes.reserve(lv.size());
  double acc = 0.0;
  for (double l : lv) {
    const double v = std::exp(l / k);
    rep.per_point_volumes.push_back(v);
    acc += v;
  }
  rep.mean_normalized_volume = acc / static_cast<double>(lv.size());
  return rep;
}

BinnedCoverage binned_conditional_coverage(const SetPredictor& predictor, const Dataset& test, int n_bins,
                                           int feature) {
  if (test.empty()) throw std::invalid_argument("binned_conditional_coverage: empty test set");
  if (n_bins < 1 || static_cast<std::size_t>(n_bins) > test.size()) {
    throw std::invalid_argument("binned_conditional_coverage: bin count out of range");
  }
  if (feature < 0 || feature >= test.x_dim()) throw std::invalid_argument("binned_conditional_coverage: bad feature");
  if (!predictor.q_hat) throw std::logic_error("binned_conditional_coverage: predictor is not calibrated");
  const double q = *predictor.q_hat;
  const auto s = predictor.scores(test.x, test.y);
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return test.x(static_cast<Eigen::Index>(a), feature) < test.x(static_cast<Eigen::Index>(b), feature);
  });
  BinnedCoverage out;
  const std::size_t n = test.size();
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(n_bins);
    const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(n_bins);
    std::size_t hit = 0;
    for (std::size_t i = lo; i < hi; ++i) hit += s[order[i]] <= q ? 1 : 0;
    const std::size_t cnt = hi - lo;
    out.counts.push_back(cnt);
    out.coverage.push_back(cnt ? static_cast<double>(hit) / static_cast<double>(cnt) : 0.0);
    out.lower_edges.push_back(test.x(static_cast<Eigen::Index>(order[lo]), feature));
    out.flagged.push_back(cnt < 10);
  }
  return out;
}

}  // namespace mvcs
