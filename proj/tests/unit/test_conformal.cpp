#include <doctest.h>

#include <numbers>

#include "mvcs/baselines.hpp"
#include "mvcs/conformal.hpp"
#include "support.hpp"

using namespace mvcs;
using namespace mvcs::testing;

namespace {

// Global MVCS predictor with f = 0 and Lambda = diag(s) (plus the ridge).
AdaptivePredictor fixed_predictor(int d, const Vector& s, double p_raw) {
  AdaptivePredictor pred;
  pred.center.net = Mlp::zeros({d, 4, static_cast<int>(s.size())});
  pred.global_a = s.cwiseSqrt().asDiagonal();
  pred.p_raw = p_raw;
  return pred;
}

Dataset gaussian_data(int n, int d, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {gaussian_matrix(n, d, rng), gaussian_matrix(n, k, rng)};
}

}  // namespace

TEST_CASE("calibration picks the conformal order statistic") {
  const AdaptivePredictor base = fixed_predictor(1, Vector::Ones(2), 2.0);
  const Dataset cal = gaussian_data(99, 1, 2, 1);
  AdaptivePredictor pred = base;
  calibrate(pred, cal, 0.1);
  auto s = pred.scores(cal.x, cal.y);
  std::sort(s.begin(), s.end());
  CHECK(*pred.q_hat == s[89]);  // ceil(0.9 * 100) = 90th smallest
  const Dataset tiny = gaussian_data(5, 1, 2, 2);
  calibrate(pred, tiny, 0.1);
  CHECK(std::isinf(*pred.q_hat));
  CHECK_THROWS(calibrate(pred, Dataset{}, 0.1));
}

TEST_CASE("scores are the p-norm of the transformed residual") {
  const AdaptivePredictor pred = fixed_predictor(2, Vector{{4.0, 1.0}}, 1.0);
  const double s = pred.score(Vector::Zero(2), Vector{{0.5, -2.0}});
  CHECK(s == doctest::Approx((4.0 + 1e-8) * 0.5 + (1.0 + 1e-8) * 2.0).epsilon(1e-12));
}

TEST_CASE("predict_set requires calibration and matches the score") {
  AdaptivePredictor pred = fixed_predictor(2, Vector{{2.0, 3.0}}, 1.5);
  CHECK_THROWS_AS(predict_set(pred, Vector::Zero(2)), std::logic_error);
  CHECK_THROWS_AS(evaluate(pred, gaussian_data(10, 2, 2, 3)), std::logic_error);
  pred.q_hat = 1.3;
  const PNormBall b = predict_set(pred, Vector::Zero(2));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Vector y = gaussian_vector(2, rng, 0.6);
    CHECK(b.contains(y) == (pred.score(Vector::Zero(2), y) <= 1.3));
  }
  pred.q_hat = 0.0;
  CHECK(predict_set(pred, Vector::Zero(2)).radius == 0.0);
}

TEST_CASE("evaluation reports coverage and normalized volume") {
  AdaptivePredictor pred = fixed_predictor(1, Vector{{1.0, 1.0}}, 2.0);
  pred.q_hat = 2.0;
  const Dataset test = gaussian_data(500, 1, 2, 5);
  const EvalReport ev = evaluate(pred, test);
  std::size_t inside = 0;
  for (int i = 0; i < 500; ++i) inside += test.y.row(i).norm() * (1.0 + 1e-8) <= 2.0;
  CHECK(ev.covered == inside);
  CHECK(ev.coverage == doctest::Approx(static_cast<double>(inside) / 500.0));
  // disc of radius 2/(1 + 1e-8): area 4 pi, normalized sqrt(4 pi)
  CHECK(ev.mean_normalized_volume == doctest::Approx(std::sqrt(4.0 * std::numbers::pi)).epsilon(1e-7));
  CHECK(ev.per_point_volumes.size() == 500);
}

TEST_CASE("coverage holds over repeated exchangeable draws") {
  AdaptivePredictor pred = fixed_predictor(1, Vector{{1.0, 2.0}}, 1.3);
  double total = 0.0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    calibrate(pred, gaussian_data(99, 1, 2, 100 + t), 0.2);
    total += evaluate(pred, gaussian_data(200, 1, 2, 10000 + t)).coverage;
  }
  const double mean = total / trials;
  // target [0.8, 0.81]; binomial standard error of the mean is about 0.002
  CHECK(mean > 0.79);
  CHECK(mean < 0.82);
}

TEST_CASE("rescaling Lambda does not change conformal sets") {
  AdaptivePredictor a = fixed_predictor(1, Vector{{1.0, 3.0}}, 1.7);
  AdaptivePredictor b = a;
  b.scale = 3.0;
  const Dataset cal = gaussian_data(50, 1, 2, 6);
  calibrate(a, cal, 0.1);
  calibrate(b, cal, 0.1);
  CHECK(*b.q_hat == doctest::Approx(3.0 * *a.q_hat).epsilon(1e-14));
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Vector y = gaussian_vector(2, rng);
    CHECK((a.score(Vector::Zero(1), y) <= *a.q_hat) == (b.score(Vector::Zero(1), y) <= *b.q_hat));
  }
}

TEST_CASE("binned coverage uses equal-count bins") {
  CovBaseline cov;
  cov.center.net = Mlp::zeros({1, 2, 1});
  cov.sigma = Matrix::Identity(1, 1);
  cov.sigma_half_inv = Matrix::Identity(1, 1);
  Dataset test;
  test.x = Vector::LinSpaced(25, 0.0, 24.0);
  test.y = Matrix::Zero(25, 1);
  for (int i = 13; i < 25; ++i) test.y(i, 0) = 5.0;  // upper half misses
  cov.q_hat = 1.0;
  const BinnedCoverage b = binned_conditional_coverage(cov, test, 5);
  CHECK(b.counts == std::vector<std::size_t>{5, 5, 5, 5, 5});
  CHECK(b.coverage[0] == 1.0);
  CHECK(b.coverage[2] == doctest::Approx(0.6));
  CHECK(b.coverage[4] == 0.0);
  CHECK(b.flagged[0]);
  CHECK(b.lower_edges[1] == 5.0);
  CHECK_THROWS(binned_conditional_coverage(cov, test, 26));
}
