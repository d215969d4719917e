#include "mvcs/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "mvcs/baselines.hpp"

namespace mvcs {

namespace {

bool uses_center(const std::string& m) {
  return m == "mvcs_adaptive" || m == "mvcs_global" || m == "emp_cov" || m == "local_cov";
}

CenterModel pretrain_center(const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  const CenterModel init =
      CenterModel::create(train.x_dim(), train.y_dim(), cfg.hidden_center, cfg.layers_center, cfg.seed);
  return mse_pretrain(init, train, val, cfg);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string pm(double mean, double sd, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << mean << " ± " << sd;
  return os.str();
}

// Largest t with score(c + t u) <= q, or NaN when the ray never leaves the set.
double ray_exit(const SetPredictor& pred, const Vector& x, const Vector& c, const Vector& u, double q) {
  double lo = 0.0, hi = 1.0;
  int grow = 0;
  while (pred.score(x, c + hi * u) <= q) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 200) return std::numeric_limits<double>::quiet_NaN();
  }
  while (hi - lo > 1e-9 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (pred.score(x, c + mid * u) <= q ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"mvcs_adaptive", "mvcs_global", "naive_qr", "emp_cov", "local_cov"};
  return m;
}

void ExperimentConfig::validate() const {
  if (source != "synthetic" && source != "csv" && source != "oned") {
    throw std::invalid_argument("experiment: source must be synthetic, csv or oned (got '" + source + "')");
  }
  if (source == "csv" && (csv_path.empty() || x_columns.empty() || y_columns.empty())) {
    throw std::invalid_argument("experiment: csv source needs a path and x/y columns");
  }
  if (source == "synthetic") synthetic.validate();
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  for (const auto& m : methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw std::invalid_argument("experiment: unknown method '" + m + "'");
    }
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("experiment: alpha must be in (0, 1)");
  if (n_runs < 1) throw std::invalid_argument("experiment: n_runs must be positive");
  if (preprocess != "auto" && preprocess != "quantile" && preprocess != "none") {
    throw std::invalid_argument("experiment: preprocess must be auto, quantile or none");
  }
  split.validate();
  TrainConfig t = train;
  t.alpha = alpha;
  t.validate();
}

Json experiment_config_to_json(const ExperimentConfig& c) {
  return {{"name", c.name},
          {"source", c.source},
          {"synthetic", synthetic_config_to_json(c.synthetic)},
          {"csv_path", c.csv_path},
          {"x_columns", c.x_columns},
          {"y_columns", c.y_columns},
          {"oned_n", c.oned_n},
          {"outlier_fraction", c.outlier_fraction},
          {"methods", c.methods},
          {"alpha", c.alpha},
          {"split", split_spec_to_json(c.split)},
          {"train", train_config_to_json(c.train)},
          {"n_runs", c.n_runs},
          {"base_seed", c.base_seed},
          {"preprocess", c.preprocess},
          {"output_dir", c.output_dir}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("name", c.name);
  get("source", c.source);
  if (j.contains("synthetic")) c.synthetic = synthetic_config_from_json(j.at("synthetic"));
  get("csv_path", c.csv_path);
  get("x_columns", c.x_columns);
  get("y_columns", c.y_columns);
  get("oned_n", c.oned_n);
  get("outlier_fraction", c.outlier_fraction);
  get("methods", c.methods);
  get("alpha", c.alpha);
  if (j.contains("split")) c.split = split_spec_from_json(j.at("split"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  get("n_runs", c.n_runs);
  get("base_seed", c.base_seed);
  get("preprocess", c.preprocess);
  get("output_dir", c.output_dir);
  c.train.alpha = c.alpha;
  c.validate();
  return c;
}

Json run_record_to_json(const RunRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return {{"seed", r.seed},
          {"dataset", r.dataset},
          {"method", r.method},
          {"alpha", r.alpha},
          {"coverage", num(r.coverage)},
          {"mean_normalized_volume", num(r.mean_normalized_volume)},
          {"wall_time", r.wall_time},
          {"learned_p", r.learned_p},
          {"error", r.error}};
}

RunRecord run_record_from_json(const Json& j) {
  auto num = [&](const char* key) {
    return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<double>()
                                                   : std::numeric_limits<double>::quiet_NaN();
  };
  RunRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.dataset = j.at("dataset").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.coverage = num("coverage");
  r.mean_normalized_volume = num("mean_normalized_volume");
  r.wall_time = num("wall_time");
  r.learned_p = num("learned_p");
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<RunRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(run_record_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

RunData prepare_run(const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset data;
  if (cfg.source == "synthetic") {
    SyntheticConfig sc = cfg.synthetic;
    if (!sc.has_parameters()) {
      // Same data-generating process for every run; only the sample changes.
      sc.seed = cfg.base_seed;
      sc.draw_parameters();
    }
    sc.seed = seed;
    data = gen_multivariate(sc);
  } else if (cfg.source == "csv") {
    data = load_csv(cfg.csv_path, cfg.x_columns, cfg.y_columns);
  } else {
    const double frac = cfg.outlier_fraction >= 0.0 ? cfg.outlier_fraction : contamination_fraction(cfg.alpha);
    data = gen_1d(frac, cfg.oned_n, seed).data;
  }
  SplitSpec spec = cfg.split;
  spec.seed = seed;
  RunData out;
  out.splits = split(data, spec);
  const bool quantile = cfg.preprocess == "quantile" || (cfg.preprocess == "auto" && cfg.source == "csv");
  if (quantile) {
    out.transform = DatasetTransform::fit(out.splits.train);
    out.splits.train = out.transform.apply(out.splits.train);
    out.splits.val = out.transform.apply(out.splits.val);
    out.splits.calib = out.transform.apply(out.splits.calib);
    out.splits.test = out.transform.apply(out.splits.test);
  }
  return out;
}

std::unique_ptr<SetPredictor> fit_method(const std::string& method, const RunData& data, const TrainConfig& cfg,
                                         const CenterModel* pretrained) {
  const Splits& s = data.splits;
  std::unique_ptr<SetPredictor> out;
  std::optional<CenterModel> own;
  if (uses_center(method) && pretrained == nullptr) {
    own = pretrain_center(s.train, s.val, cfg);
    pretrained = &*own;
  }
  if (method == "mvcs_adaptive" || method == "mvcs_global") {
    out = std::make_unique<AdaptivePredictor>(
        train_mvcs(s.train, s.val, cfg, method == "mvcs_adaptive", pretrained).predictor);
  } else if (method == "naive_qr") {
    out = std::make_unique<QuantileNets>(fit_naive_qr(s.train, s.val, cfg.alpha, cfg));
  } else if (method == "emp_cov") {
    out = std::make_unique<CovBaseline>(fit_empirical_cov(s.train, *pretrained));
  } else if (method == "local_cov") {
    out = std::make_unique<LocalCovBaseline>(fit_local_cov(s.train, *pretrained, cfg.m_neighbors));
  } else {
    throw std::invalid_argument("fit_method: unknown method '" + method + "'");
  }
  calibrate(*out, s.calib, cfg.alpha);
  return out;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  std::ofstream sink;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    sink.open(std::filesystem::path(cfg.output_dir) / "records.jsonl", std::ios::app);
    if (!sink) throw std::runtime_error("cannot write records to " + cfg.output_dir);
  }
  const bool any_center = std::any_of(cfg.methods.begin(), cfg.methods.end(), uses_center);
  std::vector<RunRecord> records;
  auto emit = [&](const RunRecord& r) {
    records.push_back(r);
    if (sink) sink << run_record_to_json(r).dump() << "\n" << std::flush;
    if (log) {
      *log << cfg.name << " seed=" << r.seed << " " << r.method;
      if (r.ok()) {
        *log << " coverage=" << r.coverage << " volume=" << r.mean_normalized_volume << " time=" << r.wall_time
             << "s\n";
      } else {
        *log << " FAILED: " << r.error << "\n";
      }
    }
  };

  for (int run = 0; run < cfg.n_runs; ++run) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    TrainConfig tc = cfg.train;
    tc.alpha = cfg.alpha;
    tc.seed = seed;
    auto base = [&](const std::string& method) {
      RunRecord r;
      r.seed = seed;
      r.dataset = cfg.name;
      r.method = method;
      r.alpha = cfg.alpha;
      return r;
    };

    RunData data;
    std::optional<CenterModel> center;
    double center_time = 0.0;
    try {
      data = prepare_run(cfg, seed);
      if (any_center) {
        const auto t0 = std::chrono::steady_clock::now();
        center = pretrain_center(data.splits.train, data.splits.val, tc);
        center_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } catch (const std::exception& e) {
      for (const auto& m : cfg.methods) {
        RunRecord r = base(m);
        r.error = std::string("data/pretrain: ") + e.what();
        emit(r);
      }
      continue;
    }

    for (const auto& method : cfg.methods) {
      RunRecord r = base(method);
      try {
        const auto t0 = std::chrono::steady_clock::now();
        auto pred = fit_method(method, data, tc, center ? &*center : nullptr);
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (uses_center(method)) r.wall_time += center_time;
        if (const auto* a = dynamic_cast<const AdaptivePredictor*>(pred.get())) r.learned_p = a->p();
        const EvalReport ev = evaluate(*pred, data.splits.test);
        r.coverage = ev.coverage;
        r.mean_normalized_volume = ev.mean_normalized_volume;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      emit(r);
    }
  }
  return records;
}

std::vector<Aggregate> aggregate(const std::vector<RunRecord>& records) {
  if (records.size() < 3) throw std::invalid_argument("aggregate: need at least 3 records");
  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, std::vector<const RunRecord*>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    const Key key{r.dataset, r.method, r.alpha};
    if (!groups.count(key)) order.push_back(key);
    auto& g = groups[key];
    if (r.ok() && std::isfinite(r.mean_normalized_volume) && std::isfinite(r.coverage)) g.push_back(&r);
  }
  std::vector<Aggregate> out;
  for (const Key& key : order) {
    auto g = groups[key];
    if (g.size() < 3) {
      std::cerr << "warning: aggregate: " << std::get<0>(key) << "/" << std::get<1>(key) << " has " << g.size()
                << " successful runs, need 3\n";
      continue;
    }
    std::sort(g.begin(), g.end(), [](const RunRecord* a, const RunRecord* b) {
      return a->mean_normalized_volume < b->mean_normalized_volume;
    });
    std::vector<double> cov, vol, p;
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
      cov.push_back(g[i]->coverage);
      vol.push_back(g[i]->mean_normalized_volume);
      p.push_back(g[i]->learned_p);
    }
    Aggregate a;
    std::tie(a.dataset, a.method, a.alpha) = key;
    a.n_records = g.size();
    a.n_used = cov.size();
    a.coverage_mean = mean_of(cov);
    a.coverage_std = sample_std(cov);
    a.volume_mean = mean_of(vol);
    a.volume_std = sample_std(vol);
    a.p_mean = mean_of(p);
    out.push_back(a);
  }
  if (out.empty()) throw std::invalid_argument("aggregate: no group has 3 successful runs");
  return out;
}

std::string format_table(const std::vector<Aggregate>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "dataset" << std::setw(16) << "method" << std::setw(8) << "alpha"
     << std::setw(20) << "volume" << std::setw(16) << "coverage %" << "runs\n";
  for (const auto& a : rows) {
    os << std::left << std::setw(20) << a.dataset << std::setw(16) << a.method << std::setw(8) << a.alpha
       << std::setw(21) << pm(a.volume_mean, a.volume_std, 2)
       << std::setw(17) << pm(100.0 * a.coverage_mean, 100.0 * a.coverage_std, 1) << a.n_used << "/"
       << a.n_records << "\n";
  }
  return os.str();
}

std::string table_csv(const std::vector<Aggregate>& rows) {
  std::ostringstream os;
  os << "dataset,method,alpha,volume_mean,volume_std,coverage_mean,coverage_std,p_mean,n_used,n_records\n";
  os << std::setprecision(10);
  for (const auto& a : rows) {
    os << a.dataset << "," << a.method << "," << a.alpha << "," << a.volume_mean << "," << a.volume_std << ","
       << a.coverage_mean << "," << a.coverage_std << "," << a.p_mean << "," << a.n_used << "," << a.n_records
       << "\n";
  }
  return os.str();
}

void emit_table(const std::vector<Aggregate>& rows, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream txt(std::filesystem::path(dir) / "table.txt");
  std::ofstream csv(std::filesystem::path(dir) / "table.csv");
  if (!txt || !csv) throw std::runtime_error("cannot write tables to " + dir);
  txt << format_table(rows);
  csv << table_csv(rows);
}

Vector set_center(const SetPredictor& predictor, const Vector& x) {
  if (const auto* a = dynamic_cast<const AdaptivePredictor*>(&predictor)) return a->center.predict(x);
  if (const auto* c = dynamic_cast<const CovBaseline*>(&predictor)) return c->center.predict(x);
  if (const auto* l = dynamic_cast<const LocalCovBaseline*>(&predictor)) return l->center.predict(x);
  if (const auto* q = dynamic_cast<const QuantileNets*>(&predictor)) {
    return 0.5 * (mlp_forward(q->lower, x) + mlp_forward(q->upper, x));
  }
  throw std::invalid_argument("set_center: unsupported predictor " + predictor.method());
}

std::vector<Vector> boundary_trace(const SetPredictor& predictor, const Vector& x, double q, int resolution) {
  const int k = predictor.response_dim();
  if (resolution < 4) throw std::invalid_argument("boundary_trace: resolution must be at least 4");
  const Vector c = set_center(predictor, x);
  std::vector<Vector> pts;
  if (!(predictor.score(x, c) <= q)) return pts;  // empty set at this x
  auto push = [&](const Vector& u) {
    const double t = ray_exit(predictor, x, c, u, q);
    if (std::isfinite(t)) pts.push_back(c + t * u);
  };
  if (k == 1) {
    push(Vector::Constant(1, -1.0));
    push(Vector::Constant(1, 1.0));
  } else if (k == 2) {
    for (int i = 0; i < resolution; ++i) {
      const double th = 2.0 * std::numbers::pi * i / resolution;
      push(Vector{{std::cos(th), std::sin(th)}});
    }
  } else if (k == 3) {
    const int n_lat = std::max(4, static_cast<int>(std::sqrt(resolution / 2.0)));
    const int n_lon = 2 * n_lat;
    for (int i = 0; i <= n_lat; ++i) {
      const double phi = std::numbers::pi * i / n_lat;
      for (int j = 0; j < (i == 0 || i == n_lat ? 1 : n_lon); ++j) {
        const double th = 2.0 * std::numbers::pi * j / n_lon;
        push(Vector{{std::sin(phi) * std::cos(th), std::sin(phi) * std::sin(th), std::cos(phi)}});
      }
    }
  } else {
    throw std::invalid_argument("boundary_trace: k > 3, use set_membership_grid");
  }
  return pts;
}

std::vector<Vector> set_membership_grid(const SetPredictor& predictor, const Vector& x, double q,
                                        const Vector& lo, const Vector& hi, int per_axis) {
  const int k = predictor.response_dim();
  if (lo.size() != k || hi.size() != k) throw std::invalid_argument("set_membership_grid: bounds size");
  if (per_axis < 2) throw std::invalid_argument("set_membership_grid: need two points per axis");
  const double total = std::pow(static_cast<double>(per_axis), k);
  if (total > 5e6) throw std::invalid_argument("set_membership_grid: grid too large");
  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  std::vector<Vector> out;
  Vector y(k);
  for (std::size_t n = 0; n < static_cast<std::size_t>(total); ++n) {
    for (int a = 0; a < k; ++a) y(a) = lo(a) + (hi(a) - lo(a)) * idx[static_cast<std::size_t>(a)] / (per_axis - 1);
    if (predictor.score(x, y) <= q) out.push_back(y);
    for (int a = 0; a < k; ++a) {
      if (++idx[static_cast<std::size_t>(a)] < per_axis) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }
  return out;
}

namespace {

// Membership grid over the bounding box found by bisecting along each axis.
std::vector<Vector> grid_members(const SetPredictor& predictor, const Vector& x, double q) {
  const int k = predictor.response_dim();
  const Vector c = set_center(predictor, x);
  if (!(predictor.score(x, c) <= q)) return {};
  Vector lo = c, hi = c;
  for (int a = 0; a < k; ++a) {
    const Vector e = Vector::Unit(k, a);
    const double up = ray_exit(predictor, x, c, e, q), down = ray_exit(predictor, x, c, -e, q);
    if (!std::isfinite(up) || !std::isfinite(down)) return {};
    // Non-convex sets can reach past the axis exits; pad the box.
    const double pad = 0.5 * (up + down);
    lo(a) -= down + pad;
    hi(a) += up + pad;
  }
  const int per_axis = std::max(3, static_cast<int>(std::pow(2e5, 1.0 / k)));
  return set_membership_grid(predictor, x, q, lo, hi, per_axis);
}

}  // namespace

void emit_plot_data(const SetPredictor& predictor, const Matrix& xs, double q, const std::string& path,
                    int resolution) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int k = predictor.response_dim();
  out << "point,sample";
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out << ",x" << j;
  for (int j = 0; j < k; ++j) out << ",y" << j;
  out << "\n" << std::setprecision(10);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const Vector x = xs.row(i).transpose();
    const auto pts = k <= 3 ? boundary_trace(predictor, x, q, resolution) : grid_members(predictor, x, q);
    for (std::size_t s = 0; s < pts.size(); ++s) {
      out << i << "," << s;
      for (Eigen::Index j = 0; j < x.size(); ++j) out << "," << x(j);
      for (int j = 0; j < k; ++j) out << "," << pts[s](j);
      out << "\n";
    }
  }
}

}  // namespace mvcs
