#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mvcs/baselines.hpp"
#include "mvcs/harness.hpp"
#include "support.hpp"

using namespace mvcs;

namespace {

RunRecord record(const std::string& method, double vol, double cov, std::uint64_t seed = 0) {
  RunRecord r;
  r.dataset = "d";
  r.method = method;
  r.mean_normalized_volume = vol;
  r.coverage = cov;
  r.seed = seed;
  return r;
}

ExperimentConfig tiny_experiment(const std::string& out) {
  ExperimentConfig c;
  c.name = "tiny";
  c.synthetic.n = 600;
  c.synthetic.d = 2;
  c.synthetic.k = 2;
  c.methods = {"emp_cov", "mvcs_global"};
  c.n_runs = 2;
  c.train.hidden_center = 8;
  c.train.layers_center = 2;
  c.train.epochs_warm = 5;
  c.train.epochs_matrix = 2;
  c.train.epochs_joint = 3;
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("aggregation drops the extreme volumes") {
  std::vector<RunRecord> rs;
  const double vols[] = {1, 2, 3, 4, 10};
  for (double v : vols) rs.push_back(record("m", v, 0.9));
  const auto a = aggregate(rs);
  REQUIRE(a.size() == 1);
  CHECK(a[0].volume_mean == doctest::Approx(3.0));
  CHECK(a[0].volume_std == doctest::Approx(1.0));
  CHECK(a[0].n_used == 3);
  CHECK(a[0].coverage_std == doctest::Approx(0.0));

  std::vector<RunRecord> same(4, record("m", 2.5, 0.8));
  CHECK(aggregate(same)[0].volume_mean == 2.5);
  CHECK(aggregate(same)[0].volume_std == 0.0);

  std::vector<RunRecord> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(record("m", i, 0.9));
  CHECK(aggregate(ten)[0].n_used == 8);

  CHECK_THROWS(aggregate({record("m", 1, 1), record("m", 2, 1)}));
}

TEST_CASE("aggregation ignores record order and failed runs") {
  std::vector<RunRecord> rs;
  for (int i = 0; i < 6; ++i) rs.push_back(record(i % 2 ? "a" : "b", 1.0 + i * i, 0.85 + 0.01 * i, i));
  RunRecord failed = record("a", 0.0, 0.0);
  failed.error = "boom";
  rs.push_back(failed);
  const auto fwd = aggregate(rs);
  std::reverse(rs.begin(), rs.end());
  auto rev = aggregate(rs);
  REQUIRE(fwd.size() == 2);
  std::sort(rev.begin(), rev.end(), [](auto& x, auto& y) { return x.method > y.method; });
  for (std::size_t i = 0; i < 2; ++i) {
    auto it = std::find_if(rev.begin(), rev.end(), [&](auto& x) { return x.method == fwd[i].method; });
    CHECK(it->volume_mean == fwd[i].volume_mean);
    CHECK(it->coverage_std == fwd[i].coverage_std);
  }
  CHECK(fwd[0].n_records == 3);
}

TEST_CASE("table formatting") {
  Aggregate a;
  a.dataset = "exp_fixed";
  a.method = "mvcs_adaptive";
  a.alpha = 0.1;
  a.volume_mean = 6.004;
  a.volume_std = 0.091;
  a.coverage_mean = 0.8972;
  a.coverage_std = 0.006;
  const std::string t = format_table({a});
  CHECK(t.find("6.00 ± 0.09") != std::string::npos);
  CHECK(t.find("89.7 ± 0.6") != std::string::npos);
  std::istringstream csv(table_csv({a}));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(row.rfind("exp_fixed,mvcs_adaptive,0.1,6.004,0.091,0.8972,0.006", 0) == 0);
}

TEST_CASE("boundary trace of a Euclidean ball") {
  CovBaseline cov;
  cov.center.net = Mlp::zeros({1, 2, 2});
  cov.center.net.biases.back() = Vector{{1.0, -2.0}};
  cov.sigma = Matrix::Identity(2, 2);
  cov.sigma_half_inv = Matrix::Identity(2, 2);
  const auto pts = boundary_trace(cov, Vector::Zero(1), 1.0, 360);
  REQUIRE(pts.size() == 360);
  for (const Vector& p : pts) CHECK(std::abs((p - Vector{{1.0, -2.0}}).norm() - 1.0) < 1e-9);
}

TEST_CASE("boundary trace of an l1 ball is a diamond") {
  AdaptivePredictor pred;
  pred.center.net = Mlp::zeros({1, 2, 2});
  pred.global_a = Matrix::Identity(2, 2);
  pred.p_raw = 1.0;
  const auto pts = boundary_trace(pred, Vector::Zero(1), 2.0, 720);
  REQUIRE(pts.size() == 720);
  for (const Vector& p : pts) CHECK(std::abs(p.cwiseAbs().sum() * (1 + 1e-8) - 2.0) < 1e-8);
  // vertices on the axes
  CHECK(pts[0](0) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(pts[180](1) == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("boundary traces in one and three dimensions") {
  CovBaseline cov;
  cov.center.net = Mlp::zeros({1, 2, 1});
  cov.sigma = Matrix::Constant(1, 1, 4.0);
  cov.sigma_half_inv = Matrix::Constant(1, 1, 0.5);
  const auto ends = boundary_trace(cov, Vector::Zero(1), 1.5);
  REQUIRE(ends.size() == 2);
  CHECK(ends[0](0) == doctest::Approx(-3.0));
  CHECK(ends[1](0) == doctest::Approx(3.0));

  CovBaseline c3;
  c3.center.net = Mlp::zeros({1, 2, 3});
  c3.sigma = Matrix::Identity(3, 3);
  c3.sigma_half_inv = Matrix::Identity(3, 3);
  const auto sphere = boundary_trace(c3, Vector::Zero(1), 1.0, 200);
  CHECK(sphere.size() > 50);
  for (const Vector& p : sphere) CHECK(std::abs(p.norm() - 1.0) < 1e-9);
}

TEST_CASE("membership grid and plot data for higher dimensions") {
  CovBaseline c4;
  c4.center.net = Mlp::zeros({1, 2, 4});
  c4.sigma = Matrix::Identity(4, 4);
  c4.sigma_half_inv = Matrix::Identity(4, 4);
  CHECK_THROWS(boundary_trace(c4, Vector::Zero(1), 1.0));
  const auto members = set_membership_grid(c4, Vector::Zero(1), 1.0, Vector::Constant(4, -1), Vector::Constant(4, 1), 5);
  for (const Vector& m : members) CHECK(m.norm() <= 1.0);
  CHECK(!members.empty());
  const auto path = (std::filesystem::temp_directory_path() / "mvcs_plot4.csv").string();
  emit_plot_data(c4, Matrix::Zero(1, 1), 1.0, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "point,sample,x0,y0,y1,y2,y3");
}

TEST_CASE("plot data parses back as numbers") {
  CovBaseline cov;
  cov.center.net = Mlp::zeros({2, 2, 2});
  cov.sigma = Matrix::Identity(2, 2);
  cov.sigma_half_inv = Matrix::Identity(2, 2);
  const auto path = (std::filesystem::temp_directory_path() / "mvcs_plot.csv").string();
  emit_plot_data(cov, Matrix::Zero(2, 2), 1.0, path, 90);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    REQUIRE(v.size() == 6);
    CHECK(std::abs(std::hypot(v[4], v[5]) - 1.0) < 1e-9);
    ++rows;
  }
  CHECK(rows == 180);
}

TEST_CASE("experiments are deterministic and persist their records") {
  const auto dir = std::filesystem::temp_directory_path() / "mvcs_harness_test";
  std::filesystem::remove_all(dir);
  const ExperimentConfig cfg = tiny_experiment(dir.string());
  const auto a = run_experiment(cfg);
  REQUIRE(a.size() == 4);
  for (const auto& r : a) {
    CHECK(r.ok());
    CHECK(r.coverage >= 0.0);
    CHECK(r.coverage <= 1.0);
  }
  CHECK(a[1].learned_p > 0.0);
  CHECK(a[0].learned_p == 0.0);
  ExperimentConfig again = cfg;
  again.output_dir.clear();
  const auto b = run_experiment(again);
  // Identical apart from the timing field.
  auto strip = [](RunRecord r) {
    r.wall_time = 0.0;
    return run_record_to_json(r).dump();
  };
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(strip(a[i]) == strip(b[i]));
  const auto loaded = load_records((dir / "records.jsonl").string());
  REQUIRE(loaded.size() == 4);
  CHECK(loaded[2].seed == 1);
  CHECK(loaded[3].coverage == a[3].coverage);
}

TEST_CASE("failing methods are recorded without stopping the sweep") {
  ExperimentConfig cfg = tiny_experiment("");
  cfg.methods = {"local_cov", "emp_cov"};
  cfg.train.m_neighbors = 1;  // a one-point covariance is singular
  const auto rs = run_experiment(cfg);
  REQUIRE(rs.size() == 4);
  CHECK_FALSE(rs[0].ok());
  CHECK(rs[1].ok());
  CHECK_FALSE(rs[2].ok());
  CHECK(rs[3].ok());
}

TEST_CASE("experiment config parsing") {
  const ExperimentConfig c = experiment_config_from_json(Json::parse(
      R"({"name": "x", "source": "oned", "alpha": 0.2, "n_runs": 3, "methods": ["naive_qr"], "train": {"epochs_pinball": 4}})"));
  CHECK(c.source == "oned");
  CHECK(c.train.alpha == 0.2);
  CHECK(c.train.epochs_pinball == 4);
  CHECK_THROWS(experiment_config_from_json(Json::parse(R"({"methods": ["magic"]})")));
  CHECK_THROWS(experiment_config_from_json(Json::parse(R"({"source": "csv"})")));
  const ExperimentConfig back = experiment_config_from_json(experiment_config_to_json(c));
  CHECK(back.methods == c.methods);
}
