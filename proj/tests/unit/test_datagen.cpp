#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mvcs/datagen.hpp"
#include "support.hpp"

using namespace mvcs;
using namespace mvcs::testing;

TEST_CASE("drawn parameters have the documented structure") {
  SyntheticConfig c;
  c.d = 3;
  c.k = 3;
  c.seed = 4;
  c.draw_parameters();
  CHECK(c.rotations.size() == 4);
  CHECK(c.anchor_points.size() == 4);
  for (const Matrix& r : c.rotations) {
    CHECK((r.transpose() * r - Matrix::Identity(3, 3)).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
  }
  CHECK(c.v.size() == 3);
  CHECK(c.beta.rows() == 3);
  CHECK(c.beta.cols() == 3);
  CHECK(c.beta.cwiseAbs().maxCoeff() <= 1.0);
  Matrix j2 = Matrix::Zero(3, 3);
  j2(0, 0) = j2(1, 1) = 1.0;
  CHECK(c.j2 == j2);
  SyntheticConfig again = c;
  again.draw_parameters();
  CHECK(again.rotations[2] == c.rotations[2]);
}

TEST_CASE("interpolated transforms are scaled rotations") {
  SyntheticConfig c;
  c.transform_fixed = false;
  c.seed = 9;
  c.draw_parameters();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Vector x = gaussian_vector(c.d, rng);
    const Matrix t = synthetic_transform(c, x);
    const double r = synthetic_radius(c, x);
    CHECK(r == doctest::Approx(x.norm() / 2 + x.dot(c.v) + 0.15));
    const Matrix rot = t / r;
    CHECK((rot.transpose() * rot - Matrix::Identity(c.k, c.k)).norm() < 1e-6);
    CHECK(rot.determinant() == doctest::Approx(1.0).epsilon(1e-6));
  }
  // At an anchor the weight concentrates on that anchor's rotation.
  CHECK((synthetic_rotation(c, c.anchor_points[1]) - c.rotations[1]).norm() < 1e-6);
}

TEST_CASE("a single anchor gives r(X) R_1 and fixed mode gives 0.65 R_1") {
  SyntheticConfig c;
  c.anchors = 1;
  c.transform_fixed = false;
  c.seed = 2;
  c.draw_parameters();
  const Vector x = Vector::LinSpaced(c.d, -0.5, 0.5);
  CHECK((synthetic_transform(c, x) - synthetic_radius(c, x) * c.rotations[0]).norm() < 1e-12);
  c.transform_fixed = true;
  CHECK((synthetic_transform(c, x) - 0.65 * c.rotations[0]).norm() == 0.0);
}

TEST_CASE("generated responses follow Y = f(X) + t(X) B") {
  SyntheticConfig c;
  c.n = 2000;
  c.seed = 3;
  c.noise = NoiseKind::exponential;
  const Dataset ds = gen_multivariate(c);
  CHECK(ds.size() == 2000);
  CHECK(ds.x.cols() == 4);
  // B = t^{-1}(Y - f(X)) must be nonnegative for exponential noise with mean 1.
  Matrix b(2000, 4);
  for (int i = 0; i < 2000; ++i) {
    const Vector x = ds.x.row(i).transpose();
    b.row(i) = synthetic_transform(c, x).lu().solve(ds.y.row(i).transpose() - synthetic_mean(c, x)).transpose();
  }
  CHECK(b.minCoeff() > -1e-9);
  CHECK(b.mean() == doctest::Approx(1.0).epsilon(0.05));
  SyntheticConfig same = c;
  CHECK(gen_multivariate(same).y == ds.y);
}

TEST_CASE("one-dimensional data with outliers") {
  const OneDimData od = gen_1d(contamination_fraction(0.1), 1000, 5);
  CHECK(od.outliers.size() == 75);
  std::set<std::size_t> rows(od.outliers.begin(), od.outliers.end());
  CHECK(rows.size() == 75);
  for (std::size_t i = 0; i < 1000; ++i) {
    const double y = od.data.y(static_cast<Eigen::Index>(i), 0);
    const double x = od.data.x(static_cast<Eigen::Index>(i), 0);
    if (rows.count(i)) {
      CHECK(y == kOutlierValue);
    } else {
      CHECK(y >= gen_1d_mean(x));
    }
  }
  CHECK(gen_1d_scale(0.5) == doctest::Approx(1.5));
  CHECK(gen_1d(0.0, 10, 1).outliers.empty());
}

TEST_CASE("normal quantile inverts the CDF") {
  for (double u : {1e-10, 1e-4, 0.02, 0.3, 0.5, 0.77, 0.999, 1 - 1e-9})
    CHECK(normal_cdf(normal_quantile(u)) == doctest::Approx(u).epsilon(1e-9));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
}

TEST_CASE("quantile transform is monotone, clipped and invertible") {
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> col(200);
  for (double& v : col) v = e(rng);
  const QuantileTransform qt = QuantileTransform::fit(col);
  double prev = -1e300;
  for (double v = -1.0; v < 8.0; v += 0.01) {
    const double z = qt.apply(v);
    CHECK(z >= prev);
    prev = z;
  }
  CHECK(qt.apply(-100.0) == doctest::Approx(normal_quantile(0.5 / 200)));
  CHECK(qt.apply(100.0) == doctest::Approx(normal_quantile(1 - 0.5 / 200)));
  for (double v : {0.05, 0.4, 1.3}) CHECK(qt.inverse(qt.apply(v)) == doctest::Approx(v).epsilon(1e-9));
  // Training data maps to roughly standard normal values.
  double m = 0.0;
  for (double v : col) m += qt.apply(v);
  CHECK(std::abs(m / 200) < 0.05);
  const QuantileTransform ties = QuantileTransform::fit({1.0, 1.0, 2.0, 3.0});
  CHECK(ties.knots.size() == 3);
  CHECK(ties.levels[0] == doctest::Approx(0.25));
}

TEST_CASE("splits are disjoint and seeded") {
  Dataset d{Vector::LinSpaced(100, 0, 99), Vector::LinSpaced(100, 0, 99)};
  SplitSpec spec;
  spec.seed = 3;
  const Splits s = split(d, spec);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 10);
  CHECK(s.calib.size() == 10);
  CHECK(s.test.size() == 10);
  std::set<double> seen;
  for (const Dataset* p : {&s.train, &s.val, &s.calib, &s.test})
    for (Eigen::Index i = 0; i < p->x.rows(); ++i) seen.insert(p->x(i, 0));
  CHECK(seen.size() == 100);
  CHECK(split(d, spec).test.x == s.test.x);
  spec.seed = 4;
  CHECK(split(d, spec).test.x != s.test.x);
  spec.train = 0.9;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("CSV round trip and column selection") {
  const auto dir = std::filesystem::temp_directory_path() / "mvcs_datagen_test";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(7);
  Dataset d{gaussian_matrix(20, 2, rng), gaussian_matrix(20, 3, rng)};
  const std::string path = (dir / "d.csv").string();
  write_csv(d, path);
  CHECK(csv_header(path) == std::vector<std::string>{"x0", "x1", "y0", "y1", "y2"});
  const Dataset back = load_csv(path, {"x0", "x1"}, {"y0", "y1", "y2"});
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  const Dataset sub = load_csv(path, {"x1"}, {"y2"});
  CHECK(sub.y.col(0) == d.y.col(2));
  CHECK_THROWS(load_csv(path, {"nope"}, {"y0"}));
  std::ofstream(dir / "bad.csv") << "x0,y0\n1,2\n3,oops\n";
  CHECK_THROWS(load_csv((dir / "bad.csv").string(), {"x0"}, {"y0"}));
}
