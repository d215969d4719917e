#include <doctest.h>

#include <numbers>

#include "mvcs/baselines.hpp"
#include "mvcs/conformal.hpp"
#include "mvcs/geometry.hpp"
#include "support.hpp"

using namespace mvcs;
using namespace mvcs::testing;

namespace {

Dataset hetero_data(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Dataset ds{Matrix(n, 2), Matrix(n, 2)};
  for (int i = 0; i < n; ++i) {
    ds.x(i, 0) = nd(rng);
    ds.x(i, 1) = nd(rng);
    const double s = 0.3 + std::abs(ds.x(i, 0));
    ds.y(i, 0) = ds.x(i, 1) + s * nd(rng);
    ds.y(i, 1) = -ds.x(i, 0) + 0.5 * s * nd(rng) + 0.3 * ds.y(i, 0);
  }
  return ds;
}

}  // namespace

TEST_CASE("per-axis level combines to the joint level") {
  for (double a : {0.1, 0.01})
    for (int k : {1, 2, 8, 16}) CHECK(std::abs(std::pow(1.0 - tilde_alpha(a, k) / 2.0, k) - (1.0 - a)) < 1e-12);
  CHECK(tilde_alpha(0.1, 1) == doctest::Approx(0.2));
  CHECK_THROWS(tilde_alpha(0.0, 2));
}

TEST_CASE("pinball loss and its gradient") {
  CHECK(pinball_loss(1.0, 3.0, 0.9) == doctest::Approx(1.8));
  CHECK(pinball_loss(3.0, 1.0, 0.9) == doctest::Approx(0.2));
  std::mt19937_64 rng(1);
  const Mlp net = Mlp::random({2, 6, 2}, 3);
  const Matrix x = gaussian_matrix(15, 2, rng), y = gaussian_matrix(15, 2, rng);
  const PinballLoss l = pinball_batch_loss(net, x, y, 0.95);
  const Matrix pred = mlp_forward(net, Matrix(x.transpose())).transpose();
  double ref = 0.0;
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 2; ++j) ref += pinball_loss(pred(i, j), y(i, j), 0.95);
  CHECK(l.value == doctest::Approx(ref / 15.0).epsilon(1e-12));
  const double h = 1e-6;
  for (std::size_t layer = 0; layer < net.layer_count(); ++layer)
    for (Eigen::Index i = 0; i < net.weights[layer].size(); ++i) {
      Mlp a = net, b = net;
      a.weights[layer].data()[i] += h;
      b.weights[layer].data()[i] -= h;
      const double fd = (pinball_batch_loss(a, x, y, 0.95, false).value - pinball_batch_loss(b, x, y, 0.95, false).value) / (2 * h);
      CHECK(rel_error(l.grads.weights[layer].data()[i], fd, 1e-5) < 1e-4);
    }
}

TEST_CASE("box score and volume") {
  QuantileNets q;
  q.lower = Mlp::zeros({1, 2, 2});
  q.upper = Mlp::zeros({1, 2, 2});
  q.upper.biases.back() = Vector{{2.0, 1.0}};
  q.lower.biases.back() = Vector{{-1.0, 0.0}};
  const Vector x = Vector::Zero(1);
  CHECK(naive_qr_score(q, x, Vector{{0.5, 0.5}}) == doctest::Approx(-0.5));
  CHECK(naive_qr_score(q, x, Vector{{3.0, 0.5}}) == doctest::Approx(1.0));
  CHECK(naive_qr_volume(q, x, 0.5) == doctest::Approx(4.0 * 2.0));
  CHECK(std::isinf(q.log_volume(x, -1.0)));
  // score <= q is exactly membership in the enlarged box
  CHECK(q.score(x, Vector{{2.49, 1.49}}) <= 0.5);
  CHECK(q.score(x, Vector{{2.51, 0.0}}) > 0.5);
}

TEST_CASE("empirical covariance ellipsoid") {
  const Dataset train = hetero_data(500, 2);
  CenterModel center{Mlp::random({2, 8, 2}, 4)};
  const CovBaseline cov = fit_empirical_cov(train, center);
  const Matrix resid = train.y - center.predict(train.x);
  const Matrix c = resid.rowwise() - resid.colwise().mean();
  const Matrix sig = c.transpose() * c / 499.0;
  CHECK((cov.sigma - sig).norm() < 1e-7 * sig.norm());
  CHECK((cov.sigma_half_inv * cov.sigma * cov.sigma_half_inv - Matrix::Identity(2, 2)).norm() < 1e-6);
  const Vector x = train.x.row(0).transpose(), y = train.y.row(0).transpose();
  const Vector e = y - center.predict(x);
  CHECK(cov.score(x, y) == doctest::Approx(std::sqrt(e.dot(cov.sigma.ldlt().solve(e)))).epsilon(1e-6));
  // ellipse area pi q^2 sqrt(det Sigma)
  CHECK(std::exp(cov.log_volume(x, 2.0)) ==
        doctest::Approx(std::numbers::pi * 4.0 * std::sqrt(cov.sigma.determinant())).epsilon(1e-6));
}

TEST_CASE("local covariance with every training point equals the global one") {
  const Dataset train = hetero_data(300, 5), test = hetero_data(50, 6);
  CenterModel center{Mlp::random({2, 8, 2}, 7)};
  const CovBaseline g = fit_empirical_cov(train, center);
  const LocalCovBaseline l = fit_local_cov(train, center, 300);
  const auto sg = g.scores(test.x, test.y), sl = l.scores(test.x, test.y);
  for (std::size_t i = 0; i < sg.size(); ++i) CHECK(std::abs(sg[i] - sl[i]) < 1e-10);
  const auto vg = g.log_volumes(test.x, 1.5), vl = l.log_volumes(test.x, 1.5);
  for (std::size_t i = 0; i < vg.size(); ++i) CHECK(std::abs(vg[i] - vl[i]) < 1e-10);
}

TEST_CASE("local covariance neighbours are the nearest covariates") {
  Dataset train{Matrix(5, 1), Matrix::Zero(5, 1)};
  train.x << 0.0, 1.0, 2.0, 3.0, 10.0;
  train.y << 0.0, 1.0, -1.0, 2.0, 5.0;
  CenterModel center{Mlp::zeros({1, 2, 1})};
  const LocalCovBaseline l = fit_local_cov(train, center, 3);
  const auto nb = l.neighbors(Vector::Constant(1, 1.2));
  CHECK(nb == std::vector<std::size_t>{1, 2, 0});  // nearest first
  const auto far = l.neighbors(Vector::Constant(1, 9.0));
  CHECK(far == std::vector<std::size_t>{4, 3, 2});
  CHECK(fit_local_cov(train, center, 50).m_neighbors == 5);
}

TEST_CASE("naive quantile regression trains and calibrates") {
  const Dataset train = hetero_data(600, 8), val = hetero_data(200, 9), cal = hetero_data(300, 10),
                test = hetero_data(600, 11);
  TrainConfig cfg;
  cfg.hidden_center = 16;
  cfg.layers_center = 2;
  cfg.epochs_pinball = 60;
  cfg.lr_pinball = 3e-3;
  QuantileNets q = fit_naive_qr(train, val, 0.1, cfg);
  CHECK(q.tilde_alpha == doctest::Approx(tilde_alpha(0.1, 2)));
  calibrate(q, cal, 0.1);
  const EvalReport ev = evaluate(q, test);
  CHECK(ev.coverage > 0.84);
  CHECK(ev.coverage < 0.96);
}

TEST_CASE("quantile nets with an explicit level match Gaussian quantiles") {
  std::mt19937_64 rng(12);
  auto draw = [&](int n) {
    Dataset ds{Matrix::Zero(n, 1), gaussian_matrix(n, 1, rng)};
    return ds;
  };
  const Dataset train = draw(2000), val = draw(400);
  TrainConfig cfg;
  cfg.hidden_center = 8;
  cfg.layers_center = 1;
  cfg.epochs_pinball = 40;
  cfg.lr_pinball = 1e-2;
  const QuantileNets q = fit_quantile_nets(train, val, 0.2, cfg);
  CHECK(q.tilde_alpha == 0.2);
  const Vector x = Vector::Zero(1);
  const double width = mlp_forward(q.upper, x)(0) - mlp_forward(q.lower, x)(0);
  const double expected = 2.0 * 1.2815515655446004;  // 2 z_{0.9}
  CHECK(std::abs(width - expected) < 0.2 * expected);
  CHECK_THROWS(fit_quantile_nets(train, val, 1.0, cfg));
}
