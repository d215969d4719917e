#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mvcs/conformal.hpp"
#include "mvcs/datagen.hpp"
#include "mvcs/predictor.hpp"
#include "mvcs/regression.hpp"
#include "mvcs/serialize.hpp"

// Repeated-run experiments: data, split, fit, calibrate, evaluate, aggregate.

namespace mvcs {

struct ExperimentConfig {
  std::string name = "experiment";
  std::string source = "synthetic";  // synthetic | csv | oned
  SyntheticConfig synthetic;
  std::string csv_path;
  std::vector<std::string> x_columns, y_columns;
  std::size_t oned_n = 2000;
  double outlier_fraction = -1.0;  // negative: contamination_fraction(alpha)
  std::vector<std::string> methods = {"mvcs_adaptive", "mvcs_global", "naive_qr", "emp_cov", "local_cov"};
  double alpha = 0.1;
  SplitSpec split;
  TrainConfig train;
  int n_runs = 10;
  std::uint64_t base_seed = 0;
  std::string preprocess = "auto";  // auto | quantile | none; auto = quantile for csv only
  std::string output_dir;           // records.jsonl is appended here when set

  void validate() const;
};

Json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const Json& j);

const std::vector<std::string>& known_methods();

struct RunRecord {
  std::uint64_t seed = 0;
  std::string dataset;
  std::string method;
  double alpha = 0.1;
  double coverage = 0.0;
  double mean_normalized_volume = 0.0;
  double wall_time = 0.0;  // seconds spent fitting
  double learned_p = 0.0;  // 0 for methods without an exponent
  std::string error;       // non-empty when the run failed

  bool ok() const { return error.empty(); }
};

Json run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const Json& j);
std::vector<RunRecord> load_records(const std::string& jsonl_path);

/// Loads and splits the data for one run, applying the configured preprocessing.
struct RunData {
  Splits splits;
  DatasetTransform transform;
};
RunData prepare_run(const ExperimentConfig& cfg, std::uint64_t seed);

/// Fits one method on the run data and calibrates it.
std::unique_ptr<SetPredictor> fit_method(const std::string& method, const RunData& data, const TrainConfig& cfg,
                                         const CenterModel* pretrained);

/// Runs every method n_runs times. A failing (seed, method) pair is recorded
/// with its error and the sweep continues.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct Aggregate {
  std::string dataset;
  std::string method;
  double alpha = 0.0;
  std::size_t n_records = 0;  // successful records
  std::size_t n_used = 0;     // after dropping the extreme-volume runs
  double coverage_mean = 0.0, coverage_std = 0.0;
  double volume_mean = 0.0, volume_std = 0.0;
  double p_mean = 0.0;
};

/// Per (dataset, method, alpha): drop the largest- and smallest-volume runs,
/// then mean and sample standard deviation. Groups with fewer than three
/// successful runs are skipped with a warning; throws if nothing is left.
std::vector<Aggregate> aggregate(const std::vector<RunRecord>& records);

/// "6.00 ± 0.09" volume and "89.7 ± 0.6" coverage (in percent).
std::string format_table(const std::vector<Aggregate>& rows);
std::string table_csv(const std::vector<Aggregate>& rows);
void emit_table(const std::vector<Aggregate>& rows, const std::string& dir);

/// A point inside the set at x (the predicted center, or the box midpoint).
Vector set_center(const SetPredictor& predictor, const Vector& x);

/// Points on the boundary of {y : score(x, y) <= q}, found by bisection
/// along rays from the center. k = 1 gives the two interval endpoints,
/// k = 2 an angular trace, k = 3 a latitude/longitude grid; larger k is
/// rejected (use set_membership_grid).
std::vector<Vector> boundary_trace(const SetPredictor& predictor, const Vector& x, double q,
                                   int resolution = 720);

/// Members of a regular grid over [lo, hi]^k (per axis `per_axis` points).
std::vector<Vector> set_membership_grid(const SetPredictor& predictor, const Vector& x, double q,
                                        const Vector& lo, const Vector& hi, int per_axis);

/// CSV rows "point,sample,x...,y...": a boundary trace for each row of xs
/// (members of a grid over the bounding box when k > 3).
void emit_plot_data(const SetPredictor& predictor, const Matrix& xs, double q, const std::string& path,
                    int resolution = 720);

}  // namespace mvcs
