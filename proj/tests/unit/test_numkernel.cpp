#include <doctest.h>

#include <numbers>

#include "mvcs/numkernel/linalg.hpp"
#include "mvcs/numkernel/mlp.hpp"
#include "mvcs/numkernel/optim.hpp"
#include "support.hpp"

using namespace mvcs;
using namespace mvcs::testing;

namespace {

Matrix random_spd(int k, std::mt19937_64& rng) {
  const Matrix g = gaussian_matrix(k, k, rng);
  return g * g.transpose() + 0.5 * Matrix::Identity(k, k);
}

}  // namespace

TEST_CASE("log_det agrees with the eigenvalue product") {
  std::mt19937_64 rng(1);
  for (int k : {1, 2, 5, 9}) {
    const Matrix m = random_spd(k, rng);
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues();
    CHECK(log_det(m) == doctest::Approx(ev.array().log().sum()).epsilon(1e-12));
  }
  CHECK(log_det(Matrix::Identity(4, 4)) == 0.0);
}

TEST_CASE("log_det rejects indefinite and non-finite input") {
  Matrix m = Matrix::Identity(2, 2);
  m(1, 1) = -1.0;
  CHECK_THROWS_AS(log_det(m), SingularMatrixError);
  m(1, 1) = std::nan("");
  CHECK_THROWS_AS(log_det(m), std::invalid_argument);
}

TEST_CASE("sym_eig reconstructs the matrix with orthonormal vectors") {
  std::mt19937_64 rng(2);
  for (int k : {1, 3, 8, 16}) {
    const Matrix g = gaussian_matrix(k, k, rng);
    const Matrix s = g + g.transpose();
    const SymEig e = sym_eig(s);
    CHECK((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - s).norm() < 1e-10 * (1.0 + s.norm()));
    CHECK((e.vectors.transpose() * e.vectors - Matrix::Identity(k, k)).norm() < 1e-10);
    for (int i = 1; i < k; ++i) CHECK(e.values(i - 1) <= e.values(i));
    const Vector ref = Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues();
    CHECK((ref - e.values).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + s.norm()));
  }
}

TEST_CASE("inverse_sqrt_spd squares to the inverse") {
  std::mt19937_64 rng(3);
  const Matrix m = random_spd(4, rng);
  const Matrix r = inverse_sqrt_spd(m);
  CHECK((r * m * r - Matrix::Identity(4, 4)).norm() < 1e-10);
  CHECK((r - r.transpose()).norm() < 1e-12);
  const Matrix zero = Matrix::Zero(2, 2);
  CHECK((inverse_sqrt_spd(zero, 4.0) - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("qr_rotation returns a rotation spanning the same flag") {
  std::mt19937_64 rng(4);
  for (int k : {2, 3, 5}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix q_raw = gaussian_matrix(k, k, rng);
      const Matrix r = qr_rotation(q_raw);
      CHECK((r.transpose() * r - Matrix::Identity(k, k)).norm() < 1e-12);
      CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
      // Reference: Householder QR normalized to a positive triangular diagonal.
      Eigen::HouseholderQR<Matrix> qr(q_raw);
      Matrix q = qr.householderQ();
      const Matrix tri = qr.matrixQR().triangularView<Eigen::Upper>();
      for (int i = 0; i < k; ++i)
        if (tri(i, i) < 0) q.col(i) *= -1.0;
      if (q.determinant() < 0) q.row(0) *= -1.0;
      CHECK((r - q).norm() < 1e-10);
    }
  }
  CHECK_THROWS_AS(qr_rotation(Matrix::Zero(3, 3)), SingularMatrixError);
}

TEST_CASE("qr_rotation_backward matches finite differences") {
  std::mt19937_64 rng(5);
  for (int k : {2, 3, 4}) {
    const Matrix q_raw = gaussian_matrix(k, k, rng);
    const Matrix w = gaussian_matrix(k, k, rng);
    auto f = [&](const Matrix& q) { return (w.array() * qr_rotation(q).array()).sum(); };
    const Matrix g = qr_rotation_backward(q_raw, w);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) CHECK(rel_error(g(i, j), central_difference(f, q_raw, i, j, 1e-6)) < 1e-6);
  }
}

TEST_CASE("expm of a planar generator is the rotation by that angle") {
  const double th = 0.7;
  Matrix s(2, 2);
  s << 0.0, -th, th, 0.0;
  Matrix r(2, 2);
  r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  CHECK((expm(s) - r).norm() < 1e-14);
  CHECK((expm(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm() == 0.0);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = -20.0;
  CHECK(expm(d)(0, 0) == doctest::Approx(std::exp(3.0)).epsilon(1e-13));
  CHECK(expm(d)(1, 1) == doctest::Approx(std::exp(-20.0)).epsilon(1e-10));
}

TEST_CASE("logm_rotation inverts expm on skew matrices") {
  std::mt19937_64 rng(6);
  for (int k : {2, 3, 4, 6}) {
    Matrix g = gaussian_matrix(k, k, rng, 0.4);
    const Matrix skew = 0.5 * (g - g.transpose());
    const Matrix l = logm_rotation(expm(skew));
    CHECK((l + l.transpose()).norm() < 1e-10);
    CHECK((expm(l) - expm(skew)).norm() < 1e-10);
  }
}

TEST_CASE("mlp gradients match finite differences") {
  std::mt19937_64 rng(7);
  Mlp net = Mlp::random({3, 5, 4, 2}, 11);
  const Matrix x = gaussian_matrix(3, 6, rng);
  const Matrix w = gaussian_matrix(2, 6, rng);
  auto loss = [&](const Mlp& m) { return (w.array() * mlp_forward(m, x).array()).sum(); };
  MlpTape tape;
  mlp_forward(net, x, &tape);
  const MlpGrads g = mlp_gradients(net, tape, w);
  const double h = 1e-6;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) {
        Mlp a = net, b = net;
        a.weights[l](i, j) += h;
        b.weights[l](i, j) -= h;
        CHECK(rel_error(g.weights[l](i, j), (loss(a) - loss(b)) / (2 * h)) < 1e-5);
      }
      Mlp a = net, b = net;
      a.biases[l](i) += h;
      b.biases[l](i) -= h;
      CHECK(rel_error(g.biases[l](i), (loss(a) - loss(b)) / (2 * h)) < 1e-5);
    }
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Matrix a = x, b = x;
    a(i, 0) += h;
    b(i, 0) -= h;
    const double fd = ((w.array() * mlp_forward(net, a).array()).sum() - (w.array() * mlp_forward(net, b).array()).sum()) / (2 * h);
    CHECK(rel_error(g.input(i, 0), fd) < 1e-5);
  }
}

TEST_CASE("mlp batched and single forward agree; zeros net outputs zero") {
  Mlp net = Mlp::random({2, 8, 3}, 3);
  std::mt19937_64 rng(8);
  const Matrix x = gaussian_matrix(2, 4, rng);
  const Matrix out = mlp_forward(net, x);
  for (int i = 0; i < 4; ++i) CHECK((mlp_forward(net, Vector(x.col(i))) - out.col(i)).norm() < 1e-14);
  CHECK(mlp_forward(Mlp::zeros({2, 8, 3}), x).norm() == 0.0);
  CHECK(net.parameter_count() == 2 * 8 + 8 + 8 * 3 + 3);
}

TEST_CASE("first adam step moves each coordinate by lr against the gradient sign") {
  Matrix p(1, 3);
  p << 1.0, 2.0, 3.0;
  Matrix g(1, 3);
  g << 0.5, -4.0, 1e-3;
  AdamState st(1, 3);
  REQUIRE(adam_step(p, g, st, 0.1));
  CHECK(p(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(2.1).epsilon(1e-6));
  CHECK(p(0, 2) == doctest::Approx(2.9).epsilon(1e-4));
  Matrix bad = g;
  bad(0, 1) = std::nan("");
  const Matrix before = p;
  CHECK_FALSE(adam_step(p, bad, st, 0.1));
  CHECK(p == before);
  CHECK(st.step_count == 1);
}

TEST_CASE("adam minimizes a quadratic") {
  Vector x = Vector::Constant(3, 5.0);
  AdamState st(3, 1);
  for (int i = 0; i < 3000; ++i) adam_step(x, Matrix(2.0 * x), st, 0.05);
  CHECK(x.norm() < 1e-2);
}

TEST_CASE("cosine annealing endpoints") {
  CHECK(cosine_annealing_lr(0.1, 0, 10) == doctest::Approx(0.1));
  CHECK(cosine_annealing_lr(0.1, 5, 10) == doctest::Approx(0.05));
  CHECK(cosine_annealing_lr(0.1, 10, 10) == doctest::Approx(0.0));
}
